use std::fmt;
use std::path::Path;

use super::{read_text, IngestError};
use crate::io::Genome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureClass {
    Cds,
    RRna,
    SnoRna,
    SnRna,
    TRna,
    Other,
}

impl FeatureClass {
    pub fn parse(s: &str) -> Self {
        match s {
            "CDS" => Self::Cds,
            "rRNA" => Self::RRna,
            "snoRNA" => Self::SnoRna,
            "snRNA" => Self::SnRna,
            "tRNA" => Self::TRna,
            _ => Self::Other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cds => "CDS",
            Self::RRna => "rRNA",
            Self::SnoRna => "snoRNA",
            Self::SnRna => "snRNA",
            Self::TRna => "tRNA",
            Self::Other => "other",
        }
    }

    /// Classes whose loci cannot host a miRNA.
    pub fn is_excluded(self) -> bool {
        self != Self::Other
    }
}

impl fmt::Display for FeatureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A genomic interval, 0-based half-open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureAnnotation {
    pub chrom: String,
    pub start: usize,
    pub end: usize,
    pub class: FeatureClass,
}

/// Parses `chrom\tstart\tend\tclass` rows. `#` lines and a leading
/// `chrom` header row are skipped.
pub fn parse_annotations(text: &str) -> Result<Vec<FeatureAnnotation>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(IngestError::parse(line_no, "expected 4 tab-separated columns"));
        }
        if out.is_empty() && fields[0] == "chrom" && fields[1] == "start" {
            continue;
        }
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| IngestError::parse(line_no, "coordinate is not an integer"))
        };
        let (start, end) = (num(fields[1])?, num(fields[2])?);
        if start >= end {
            return Err(IngestError::parse(line_no, "interval start must be < end"));
        }
        out.push(FeatureAnnotation {
            chrom: fields[0].trim().to_string(),
            start,
            end,
            class: FeatureClass::parse(fields[3].trim()),
        });
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<FeatureAnnotation>, IngestError> {
    parse_annotations(&read_text(path)?)
}

/// Per-chromosome blocking intervals sorted by start, with a running
/// maximum of interval ends for binary-searched overlap queries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationIndex {
    per_chrom: Vec<ChromIntervals>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ChromIntervals {
    starts: Vec<usize>,
    max_end: Vec<usize>,
}

impl AnnotationIndex {
    /// Indexes the excluded-class annotations (CDS, rRNA, snoRNA, snRNA,
    /// tRNA). Annotations on chromosomes absent from `genome` are ignored.
    pub fn excluded_features(annotations: &[FeatureAnnotation], genome: &Genome) -> Self {
        let intervals = annotations.iter().filter(|a| a.class.is_excluded()).filter_map(|a| {
            genome.chrom_index(&a.chrom).map(|c| (c, a.start, a.end))
        });
        Self::from_intervals(genome.chroms.len(), intervals)
    }

    /// Indexes arbitrary `(chrom, start, end)` intervals, all of which block.
    pub fn from_intervals(n_chroms: usize, intervals: impl IntoIterator<Item = (usize, usize, usize)>) -> Self {
        let mut raw: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_chroms];
        for (c, s, e) in intervals {
            if c >= raw.len() {
                raw.resize(c + 1, Vec::new());
            }
            raw[c].push((s, e));
        }
        let per_chrom = raw
            .into_iter()
            .map(|mut iv| {
                iv.sort_unstable();
                let mut running = 0;
                let max_end = iv
                    .iter()
                    .map(|&(_, e)| {
                        running = running.max(e);
                        running
                    })
                    .collect();
                ChromIntervals {
                    starts: iv.iter().map(|&(s, _)| s).collect(),
                    max_end,
                }
            })
            .collect();
        Self { per_chrom }
    }

    /// True if `[start, end)` shares at least one base with an indexed interval.
    pub fn overlaps(&self, chrom: usize, start: usize, end: usize) -> bool {
        let Some(ci) = self.per_chrom.get(chrom) else {
            return false;
        };
        // intervals starting before `end` are the only candidates
        let n = ci.starts.partition_point(|&s| s < end);
        n > 0 && ci.max_end[n - 1] > start
    }

    pub fn is_empty(&self) -> bool {
        self.per_chrom.iter().all(|c| c.starts.is_empty())
    }
}
