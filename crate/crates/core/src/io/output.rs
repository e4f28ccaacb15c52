//! Result files. Every table is UTF-8 TSV with a one-line header; each row
//! type renders and re-parses losslessly.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::{rpm, DiffExprResult, EnrichmentResult, TargetHit};
use crate::config::PipelineConfig;
use crate::io::GuidePair;
use crate::model::Strand;
use crate::pipeline::{AnnotationRun, LibrarySummary, PredictionRun};

pub const BASE_FILES: [&str; 10] = [
    "mirna_predictions.tsv",
    "precursors.tsv",
    "precursor_structures.tsv",
    "target_genes.tsv",
    "expression_counts.tsv",
    "expression_rpm.tsv",
    "library_summary.tsv",
    "verdict_summary.tsv",
    "stage_metrics.tsv",
    "run_parameters.tsv",
];
pub const DIFF_FILES: [&str; 2] = ["fold_change.tsv", "differential_expression.tsv"];
pub const ENRICH_FILE: &str = "enriched_pathways.tsv";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn perr(line: usize, message: impl Into<String>) -> OutputError {
    OutputError::Parse {
        line,
        message: message.into(),
    }
}

/// Field cursor used by row parsers.
pub struct Fields<'a> {
    it: std::str::Split<'a, char>,
    line: usize,
}

impl<'a> Fields<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        Self {
            it: text.split('\t'),
            line,
        }
    }

    pub fn str(&mut self) -> Result<&'a str, OutputError> {
        self.it.next().ok_or_else(|| perr(self.line, "missing column"))
    }

    pub fn parse<T: FromStr>(&mut self) -> Result<T, OutputError> {
        let s = self.str()?;
        s.parse().map_err(|_| perr(self.line, format!("bad value `{s}`")))
    }

    pub fn strand(&mut self) -> Result<Strand, OutputError> {
        let s = self.str()?;
        Strand::parse(s).ok_or_else(|| perr(self.line, format!("bad strand `{s}`")))
    }

    /// `-` stands for an absent value.
    pub fn opt<T: FromStr>(&mut self) -> Result<Option<T>, OutputError> {
        let s = self.str()?;
        if s == "-" {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| perr(self.line, format!("bad value `{s}`")))
    }

    fn finish(mut self) -> Result<(), OutputError> {
        match self.it.next() {
            None => Ok(()),
            Some(_) => Err(perr(self.line, "too many columns")),
        }
    }
}

/// A row of one result table.
pub trait TsvRow: Sized {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError>;
}

pub fn render_rows<R: TsvRow>(rows: &[R]) -> String {
    let mut out = R::HEADER.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.fields().join("\t"));
        out.push('\n');
    }
    out
}

pub fn parse_rows<R: TsvRow>(text: &str) -> Result<Vec<R>, OutputError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| perr(1, "missing header"))?;
    if header != R::HEADER.join("\t") {
        return Err(perr(1, format!("unexpected header `{header}`")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut f = Fields::new(line, i + 2);
        rows.push(R::parse(&mut f)?);
        f.finish()?;
    }
    Ok(rows)
}

fn opt_field<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_else(|| "-".into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub mirna: String,
    pub library: String,
    pub count: u64,
    pub rpm: f64,
    pub loci: usize,
    pub precursors: usize,
}

impl TsvRow for PredictionRow {
    const HEADER: &'static [&'static str] = &["mirna", "library", "count", "rpm", "loci", "precursors"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.mirna.clone(),
            self.library.clone(),
            self.count.to_string(),
            self.rpm.to_string(),
            self.loci.to_string(),
            self.precursors.to_string(),
        ]
    }

    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError> {
        Ok(Self {
            mirna: f.str()?.into(),
            library: f.str()?.into(),
            count: f.parse()?,
            rpm: f.parse()?,
            loci: f.parse()?,
            precursors: f.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrecursorRow {
    pub mirna: String,
    pub chrom: String,
    pub start: usize,
    pub end: usize,
    pub strand: Strand,
    pub mirna_start: usize,
    pub star: Option<String>,
    pub star_start: Option<usize>,
    pub libraries: String,
}

impl TsvRow for PrecursorRow {
    const HEADER: &'static [&'static str] =
        &["mirna", "chrom", "start", "end", "strand", "mirna_start", "star", "star_start", "libraries"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.mirna.clone(),
            self.chrom.clone(),
            self.start.to_string(),
            self.end.to_string(),
            self.strand.to_string(),
            self.mirna_start.to_string(),
            opt_field(&self.star),
            opt_field(&self.star_start),
            self.libraries.clone(),
        ]
    }

    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError> {
        Ok(Self {
            mirna: f.str()?.into(),
            chrom: f.str()?.into(),
            start: f.parse()?,
            end: f.parse()?,
            strand: f.strand()?,
            mirna_start: f.parse()?,
            star: f.opt()?,
            star_start: f.opt()?,
            libraries: f.str()?.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureRow {
    pub mirna: String,
    pub chrom: String,
    pub start: usize,
    pub end: usize,
    pub strand: Strand,
    pub sequence: String,
    pub structure: String,
}

impl TsvRow for StructureRow {
    const HEADER: &'static [&'static str] = &["mirna", "chrom", "start", "end", "strand", "sequence", "structure"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.mirna.clone(),
            self.chrom.clone(),
            self.start.to_string(),
            self.end.to_string(),
            self.strand.to_string(),
            self.sequence.clone(),
            self.structure.clone(),
        ]
    }

    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError> {
        Ok(Self {
            mirna: f.str()?.into(),
            chrom: f.str()?.into(),
            start: f.parse()?,
            end: f.parse()?,
            strand: f.strand()?,
            sequence: f.str()?.into(),
            structure: f.str()?.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRow {
    pub mirna: String,
    pub rank: usize,
    pub gene: String,
    pub score: f64,
}

impl TsvRow for TargetRow {
    const HEADER: &'static [&'static str] = &["mirna", "rank", "gene", "score"];

    fn fields(&self) -> Vec<String> {
        vec![self.mirna.clone(), self.rank.to_string(), self.gene.clone(), self.score.to_string()]
    }

    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError> {
        Ok(Self {
            mirna: f.str()?.into(),
            rank: f.parse()?,
            gene: f.str()?.into(),
            score: f.parse()?,
        })
    }
}

impl TsvRow for LibrarySummary {
    const HEADER: &'static [&'static str] = &[
        "library",
        "raw_reads",
        "dropped_reads",
        "unique_sequences",
        "total_reads",
        "aligned_reads",
        "predicted_mirnas",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.library.clone(),
            self.raw_reads.to_string(),
            self.dropped_reads.to_string(),
            self.unique_sequences.to_string(),
            self.total_reads.to_string(),
            self.aligned_reads.to_string(),
            self.predicted_mirnas.to_string(),
        ]
    }

    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError> {
        Ok(Self {
            library: f.str()?.into(),
            raw_reads: f.parse()?,
            dropped_reads: f.parse()?,
            unique_sequences: f.parse()?,
            total_reads: f.parse()?,
            aligned_reads: f.parse()?,
            predicted_mirnas: f.parse()?,
        })
    }
}

/// Two-column `key<TAB>value` rows; used for verdict tallies and run
/// parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyValueRow<const V: usize> {
    pub key: String,
    pub value: String,
}

pub type VerdictRow = KeyValueRow<0>;
pub type ParamRow = KeyValueRow<1>;

const KV_HEADERS: [&[&str]; 2] = [&["verdict", "count"], &["key", "value"]];

impl<const V: usize> TsvRow for KeyValueRow<V> {
    const HEADER: &'static [&'static str] = KV_HEADERS[V];

    fn fields(&self) -> Vec<String> {
        vec![self.key.clone(), self.value.clone()]
    }

    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError> {
        Ok(Self {
            key: f.str()?.into(),
            value: f.str()?.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRow {
    pub stage: String,
    pub in_count: usize,
    pub out_count: usize,
    pub seconds: f64,
}

impl TsvRow for StageRow {
    const HEADER: &'static [&'static str] = &["stage", "in_count", "out_count", "seconds"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.stage.clone(),
            self.in_count.to_string(),
            self.out_count.to_string(),
            format!("{:.6}", self.seconds),
        ]
    }

    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError> {
        Ok(Self {
            stage: f.str()?.into(),
            in_count: f.parse()?,
            out_count: f.parse()?,
            seconds: f.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldChangeRow {
    pub mirna: String,
    pub experiment: String,
    pub control: String,
    pub experiment_rpm: f64,
    pub control_rpm: f64,
    pub fold_change: f64,
}

impl TsvRow for FoldChangeRow {
    const HEADER: &'static [&'static str] =
        &["mirna", "experiment", "control", "experiment_rpm", "control_rpm", "fold_change"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.mirna.clone(),
            self.experiment.clone(),
            self.control.clone(),
            self.experiment_rpm.to_string(),
            self.control_rpm.to_string(),
            self.fold_change.to_string(),
        ]
    }

    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError> {
        Ok(Self {
            mirna: f.str()?.into(),
            experiment: f.str()?.into(),
            control: f.str()?.into(),
            experiment_rpm: f.parse()?,
            control_rpm: f.parse()?,
            fold_change: f.parse()?,
        })
    }
}

impl TsvRow for DiffExprResult {
    const HEADER: &'static [&'static str] =
        &["mirna", "experiment", "control", "fold_change", "z", "p", "q", "significant"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.mirna.clone(),
            self.pair.experiment.clone(),
            self.pair.control.clone(),
            self.fold_change.to_string(),
            self.z.to_string(),
            self.p.to_string(),
            self.q.to_string(),
            self.significant.to_string(),
        ]
    }

    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError> {
        Ok(Self {
            mirna: f.str()?.into(),
            pair: GuidePair::new(f.str()?, f.str()?),
            fold_change: f.parse()?,
            z: f.parse()?,
            p: f.parse()?,
            q: f.parse()?,
            significant: f.parse()?,
        })
    }
}

impl TsvRow for EnrichmentResult {
    const HEADER: &'static [&'static str] =
        &["experiment", "control", "pathway", "name", "k", "n", "K", "N", "p", "enriched"];

    fn fields(&self) -> Vec<String> {
        let (e, c) = match &self.pair {
            Some(p) => (p.experiment.clone(), p.control.clone()),
            None => ("-".into(), "-".into()),
        };
        vec![
            e,
            c,
            self.pathway.clone(),
            self.name.clone(),
            self.k.to_string(),
            self.n.to_string(),
            self.big_k.to_string(),
            self.big_n.to_string(),
            self.p.to_string(),
            self.enriched.to_string(),
        ]
    }

    fn parse(f: &mut Fields<'_>) -> Result<Self, OutputError> {
        let e: Option<String> = f.opt()?;
        let c: Option<String> = f.opt()?;
        Ok(Self {
            pair: e.zip(c).map(|(e, c)| GuidePair::new(e, c)),
            pathway: f.str()?.into(),
            name: f.str()?.into(),
            k: f.parse()?,
            n: f.parse()?,
            big_k: f.parse()?,
            big_n: f.parse()?,
            p: f.parse()?,
            enriched: f.parse()?,
        })
    }
}

/// A miRNA-by-library table with one column per library.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub libraries: Vec<String>,
    pub rows: Vec<(String, Vec<T>)>,
}

impl<T: ToString + FromStr> Matrix<T> {
    pub fn render(&self) -> String {
        let mut out = String::from("mirna");
        for l in &self.libraries {
            out.push('\t');
            out.push_str(l);
        }
        out.push('\n');
        for (m, vals) in &self.rows {
            out.push_str(m);
            for v in vals {
                out.push('\t');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, OutputError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| perr(1, "missing header"))?;
        let mut cols = header.split('\t');
        if cols.next() != Some("mirna") {
            return Err(perr(1, "first column must be `mirna`"));
        }
        let libraries: Vec<String> = cols.map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut f = Fields::new(line, i + 2);
            let m = f.str()?.to_string();
            let vals = (0..libraries.len()).map(|_| f.parse()).collect::<Result<Vec<T>, _>>()?;
            f.finish()?;
            rows.push((m, vals));
        }
        Ok(Self { libraries, rows })
    }
}

fn library_list(ids: &[String], libs: &[usize]) -> String {
    if libs.is_empty() {
        "-".into()
    } else {
        libs.iter().map(|&i| ids[i].as_str()).collect::<Vec<_>>().join(",")
    }
}

pub fn prediction_rows(run: &PredictionRun) -> Vec<PredictionRow> {
    let mut rows = Vec::new();
    for p in &run.predictions {
        for &l in &p.libraries {
            rows.push(PredictionRow {
                mirna: p.sequence.clone(),
                library: run.library_ids[l].clone(),
                count: p.counts[l],
                rpm: rpm(p.counts[l], run.library_totals[l]),
                loci: p.loci.len(),
                precursors: p.precursors.len(),
            });
        }
    }
    rows
}

pub fn precursor_rows(run: &PredictionRun) -> Vec<PrecursorRow> {
    run.predictions
        .iter()
        .flat_map(|p| {
            p.precursors.iter().map(|pre| PrecursorRow {
                mirna: p.sequence.clone(),
                chrom: pre.chrom.clone(),
                start: pre.start,
                end: pre.end,
                strand: pre.strand,
                mirna_start: pre.mature_start,
                star: pre.star.clone(),
                star_start: pre.star_start,
                libraries: library_list(&run.library_ids, &pre.libraries),
            })
        })
        .collect()
}

pub fn structure_rows(run: &PredictionRun) -> Vec<StructureRow> {
    run.predictions
        .iter()
        .flat_map(|p| {
            p.precursors.iter().map(|pre| StructureRow {
                mirna: p.sequence.clone(),
                chrom: pre.chrom.clone(),
                start: pre.start,
                end: pre.end,
                strand: pre.strand,
                sequence: pre.sequence.clone(),
                structure: pre.structure.clone(),
            })
        })
        .collect()
}

/// Ranks restart at 1 for each miRNA.
pub fn target_rows(hits: &[TargetHit]) -> Vec<TargetRow> {
    let mut rows: Vec<TargetRow> = Vec::with_capacity(hits.len());
    for h in hits {
        let rank = match rows.last() {
            Some(r) if r.mirna == h.mirna => r.rank + 1,
            _ => 1,
        };
        rows.push(TargetRow {
            mirna: h.mirna.clone(),
            rank,
            gene: h.gene.clone(),
            score: h.score,
        });
    }
    rows
}

/// Parameters that shape results. The worker count is left out so outputs
/// do not depend on it.
pub fn param_rows(run: &PredictionRun, config: &PipelineConfig) -> Vec<ParamRow> {
    let mut rows: Vec<ParamRow> = config
        .pairs()
        .into_iter()
        .filter(|(k, _)| *k != "workers")
        .map(|(k, v)| ParamRow { key: k.into(), value: v })
        .collect();
    rows.push(ParamRow {
        key: "libraries".into(),
        value: run.library_ids.join(","),
    });
    rows
}

pub fn fold_change_rows(run: &PredictionRun, diff: &[DiffExprResult]) -> Vec<FoldChangeRow> {
    let rpm_of = |mirna: &str, lib: &str| {
        let l = run.library_ids.iter().position(|x| x == lib)?;
        let p = run.predictions.iter().find(|p| p.sequence == mirna)?;
        Some(rpm(p.counts[l], run.library_totals[l]))
    };
    diff.iter()
        .map(|d| FoldChangeRow {
            mirna: d.mirna.clone(),
            experiment: d.pair.experiment.clone(),
            control: d.pair.control.clone(),
            experiment_rpm: rpm_of(&d.mirna, &d.pair.experiment).unwrap_or(0.0),
            control_rpm: rpm_of(&d.mirna, &d.pair.control).unwrap_or(0.0),
            fold_change: d.fold_change,
        })
        .collect()
}

/// Which optional tables to emit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutputOptions {
    pub diff: bool,
    pub enrich: bool,
}

/// Renders the 10 base tables, plus 2 with differential expression and 1
/// more with enrichment.
pub fn render_outputs(
    run: &PredictionRun,
    annotation: &AnnotationRun,
    config: &PipelineConfig,
    opts: OutputOptions,
) -> Vec<(&'static str, String)> {
    let counts = Matrix {
        libraries: run.library_ids.clone(),
        rows: run.predictions.iter().map(|p| (p.sequence.clone(), p.counts.clone())).collect(),
    };
    let rpms = Matrix {
        libraries: run.library_ids.clone(),
        rows: run.profiles().into_iter().map(|p| (p.mirna, p.rpm)).collect(),
    };
    let verdicts: Vec<VerdictRow> = run
        .verdicts
        .iter()
        .map(|(k, v)| VerdictRow { key: k.clone(), value: v.to_string() })
        .collect();
    let stages: Vec<StageRow> = run
        .metrics
        .stages
        .iter()
        .map(|s| StageRow {
            stage: s.stage.clone(),
            in_count: s.in_count,
            out_count: s.out_count,
            seconds: s.seconds,
        })
        .collect();
    let mut files = vec![
        (BASE_FILES[0], render_rows(&prediction_rows(run))),
        (BASE_FILES[1], render_rows(&precursor_rows(run))),
        (BASE_FILES[2], render_rows(&structure_rows(run))),
        (BASE_FILES[3], render_rows(&target_rows(&annotation.targets))),
        (BASE_FILES[4], counts.render()),
        (BASE_FILES[5], rpms.render()),
        (BASE_FILES[6], render_rows(&run.summaries)),
        (BASE_FILES[7], render_rows(&verdicts)),
        (BASE_FILES[8], render_rows(&stages)),
        (BASE_FILES[9], render_rows(&param_rows(run, config))),
    ];
    if opts.diff {
        files.push((DIFF_FILES[0], render_rows(&fold_change_rows(run, &annotation.differential))));
        files.push((DIFF_FILES[1], render_rows(&annotation.differential)));
        if opts.enrich {
            files.push((ENRICH_FILE, render_rows(&annotation.enrichment)));
        }
    }
    files
}

pub fn write_outputs(dir: &Path, files: &[(&'static str, String)]) -> Result<Vec<PathBuf>, OutputError> {
    let io = |path: &Path, source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Distinct miRNA sequences of a `mirna_predictions.tsv` file.
pub fn parse_predicted_sequences(text: &str) -> Result<std::collections::BTreeSet<String>, OutputError> {
    Ok(parse_rows::<PredictionRow>(text)?.into_iter().map(|r| r.mirna).collect())
}
