use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{read_text, IngestError};

/// Gene-to-pathway membership with pathway display names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathwayMap {
    pub gene_pathways: BTreeMap<String, BTreeSet<String>>,
    pub names: BTreeMap<String, String>,
}

impl PathwayMap {
    pub fn insert(&mut self, gene: &str, pathway: &str, name: &str) {
        self.gene_pathways
            .entry(gene.to_string())
            .or_default()
            .insert(pathway.to_string());
        self.names
            .entry(pathway.to_string())
            .or_insert_with(|| name.to_string());
    }

    /// Every gene with at least one pathway.
    pub fn universe(&self) -> impl Iterator<Item = &String> {
        self.gene_pathways.keys()
    }

    /// Genes annotated with each pathway.
    pub fn members(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (gene, pws) in &self.gene_pathways {
            for p in pws {
                out.entry(p.as_str()).or_default().insert(gene.as_str());
            }
        }
        out
    }
}

/// Parses `gene_id\tpathway_id:pathway_name` rows; a gene may appear on
/// several rows. The name is everything after the first `:`.
pub fn parse_pathways(text: &str) -> Result<PathwayMap, IngestError> {
    let mut map = PathwayMap::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (gene, pw) = line
            .split_once('\t')
            .ok_or_else(|| IngestError::parse(line_no, "expected gene_id<TAB>pathway_id:name"))?;
        let (id, name) = pw
            .split_once(':')
            .ok_or_else(|| IngestError::parse(line_no, "pathway must be id:name"))?;
        let (gene, id, name) = (gene.trim(), id.trim(), name.trim());
        if gene.is_empty() || id.is_empty() {
            return Err(IngestError::parse(line_no, "empty gene or pathway id"));
        }
        if let Some(existing) = map.names.get(id) {
            if existing != name {
                return Err(IngestError::parse(line_no, format!("pathway `{id}` has two names")));
            }
        }
        map.insert(gene, id, name);
    }
    Ok(map)
}

pub fn load_pathways(path: &Path) -> Result<PathwayMap, IngestError> {
    parse_pathways(&read_text(path)?)
}
