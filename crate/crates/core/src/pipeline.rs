//! End-to-end driver: ingest, filter, align, hairpin gates and dominance on
//! the dataflow engine, then expression statistics, targets and enrichment.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::align::{passes_locus_count, GenomeIndex};
use crate::analysis::{
    differential_expression, hypergeom_enrich, target_rank, DiffExprResult, EnrichmentResult, ExpressionProfile,
    TargetError, TargetHit,
};
use crate::config::PipelineConfig;
use crate::dataflow::{DataflowError, Dataset, Engine, Run, RunMetrics, Stage, StageKind};
use crate::hairpin::{
    apply_dominance, apply_duplex, apply_star, apply_structural, extract_windows, fold_candidate, AlignedReference,
    PrecursorCandidate, Reason, Verdict,
};
use crate::io::{merge_libraries, AnnotationIndex, Genome, GuidePair, Library, PathwayMap};
use crate::model::{Locus, SharedRecord, SmallRnaRecord, Strand};
use crate::prefilter::{passes_known_nonmirna, passes_low_complexity, passes_mirna_length};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataflow(#[from] DataflowError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error("at least one library is required")]
    NoLibraries,
}

/// Broadcast context for the read-level stages.
struct ReadCtx<'a> {
    config: &'a PipelineConfig,
    index: &'a GenomeIndex,
    annotations: &'a AnnotationIndex,
}

/// Broadcast context for the candidate-level stages.
struct CandidateCtx<'a> {
    config: &'a PipelineConfig,
    index: &'a GenomeIndex,
    reference: &'a AlignedReference,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibrarySummary {
    pub library: String,
    pub raw_reads: u64,
    pub dropped_reads: u64,
    pub unique_sequences: usize,
    /// Reads kept after ingest; the RPM denominator.
    pub total_reads: u64,
    pub aligned_reads: u64,
    pub predicted_mirnas: usize,
}

/// One validated precursor of a predicted miRNA, in genomic coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrecursorRecord {
    pub chrom: String,
    pub start: usize,
    pub end: usize,
    pub strand: Strand,
    pub mature_start: usize,
    pub star: Option<String>,
    pub star_start: Option<usize>,
    /// Sense-orientation precursor bases and structure.
    pub sequence: String,
    pub structure: String,
    pub libraries: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MirnaPrediction {
    pub sequence: String,
    pub counts: Vec<u64>,
    pub loci: Vec<Locus>,
    pub precursors: Vec<PrecursorRecord>,
    /// Libraries in which at least one precursor passed dominance.
    pub libraries: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PredictionRun {
    pub library_ids: Vec<String>,
    pub library_totals: Vec<u64>,
    pub chrom_names: Vec<String>,
    pub summaries: Vec<LibrarySummary>,
    pub predictions: Vec<MirnaPrediction>,
    /// Best verdict per (sequence, locus), tallied by code.
    pub verdicts: Vec<(String, usize)>,
    pub metrics: RunMetrics,
}

impl PredictionRun {
    pub fn profiles(&self) -> Vec<ExpressionProfile> {
        self.predictions
            .iter()
            .map(|p| ExpressionProfile::new(p.sequence.clone(), p.counts.clone(), &self.library_totals))
            .collect()
    }

    pub fn predicted_sequences(&self) -> BTreeSet<String> {
        self.predictions.iter().map(|p| p.sequence.clone()).collect()
    }
}

/// Runs prediction over every library.
pub fn run_predict(
    libraries: &[Library],
    genome: &Genome,
    index: &GenomeIndex,
    annotations: &AnnotationIndex,
    config: &PipelineConfig,
    engine: &Engine,
) -> Result<PredictionRun, PipelineError> {
    if libraries.is_empty() {
        return Err(PipelineError::NoLibraries);
    }
    let n_libs = libraries.len();
    let mut run = Run::new(engine);
    let parts = engine.default_partitions();

    let t = Instant::now();
    let merged = merge_libraries(libraries);
    let n_reads = libraries.iter().map(|l| l.reads.len()).sum();
    run.record("collapse", StageKind::Map, n_reads, merged.len(), t.elapsed().as_secs_f64());
    let ctx = ReadCtx { config, index, annotations };
    let mut ds = Dataset::partition(merged, parts);

    let stages: Vec<Stage<SmallRnaRecord, SmallRnaRecord, ReadCtx>> = vec![
        Stage::filter("min_length", |r: &SmallRnaRecord, c: &ReadCtx| r.len() >= c.config.min_srna_len),
        Stage::filter("abundance", |r: &SmallRnaRecord, c: &ReadCtx| r.total_count() >= c.config.min_srna_freq),
        Stage::filter("low_complexity", |r: &SmallRnaRecord, c: &ReadCtx| {
            passes_low_complexity(r, c.config.dust_threshold)
        }),
        Stage::map("align", |mut r: SmallRnaRecord, c: &ReadCtx| {
            r.loci = c.index.locate_exact(r.sequence.as_bytes());
            r
        }),
        Stage::filter("aligned", |r: &SmallRnaRecord, _: &ReadCtx| !r.loci.is_empty()),
    ];
    for s in &stages {
        ds = run.apply(s, ds, &ctx)?;
    }
    let aligned = ds.into_vec();
    let t = Instant::now();
    let reference = AlignedReference::build(&aligned, index.num_chroms());
    run.record("reference", StageKind::Map, aligned.len(), reference.num_records(), t.elapsed().as_secs_f64());
    let mut aligned_reads = vec![0u64; n_libs];
    for r in &aligned {
        for (acc, c) in aligned_reads.iter_mut().zip(&r.counts) {
            *acc += c;
        }
    }

    let stages: Vec<Stage<SmallRnaRecord, SmallRnaRecord, ReadCtx>> = vec![
        Stage::filter("locus_count", |r: &SmallRnaRecord, c: &ReadCtx| passes_locus_count(r, c.config.max_loci)),
        Stage::filter("mirna_length", |r: &SmallRnaRecord, c: &ReadCtx| {
            passes_mirna_length(r, c.config.mirna_len_range)
        }),
        Stage::filter("known_nonmirna", |r: &SmallRnaRecord, c: &ReadCtx| passes_known_nonmirna(r, c.annotations)),
        Stage::filter("mirna_abundance", |r: &SmallRnaRecord, c: &ReadCtx| {
            r.counts.iter().any(|&n| n >= c.config.min_mirna_freq)
        }),
    ];
    let mut ds = Dataset::partition(aligned, parts);
    for s in &stages {
        ds = run.apply(s, ds, &ctx)?;
    }

    let cctx = CandidateCtx { config, index, reference: &reference };
    let explode: Stage<SmallRnaRecord, (SharedRecord, Locus), CandidateCtx> =
        Stage::flat_map("explode_loci", |r: SmallRnaRecord, _: &CandidateCtx| {
            let shared = Arc::new(r);
            shared.loci.iter().map(|&l| (shared.clone(), l)).collect()
        });
    let windows: Stage<(SharedRecord, Locus), PrecursorCandidate, CandidateCtx> =
        Stage::flat_map("extract_windows", |(r, l): (SharedRecord, Locus), c: &CandidateCtx| {
            extract_windows(&r, l, c.index, c.config)
        });
    let ds = run.apply(&explode, ds, &cctx)?;
    let ds = run.apply(&windows, ds, &cctx)?;
    let t = Instant::now();
    let mut ds = ds.rebalance(parts);
    run.record("rebalance", StageKind::Map, ds.len(), ds.len(), t.elapsed().as_secs_f64());

    let gates: Vec<Stage<PrecursorCandidate, PrecursorCandidate, CandidateCtx>> = vec![
        Stage::map("fold", |c: PrecursorCandidate, _: &CandidateCtx| fold_candidate(c)),
        Stage::map("duplex", |c: PrecursorCandidate, x: &CandidateCtx| apply_duplex(c, x.config)),
        Stage::map("star", |c: PrecursorCandidate, _: &CandidateCtx| apply_star(c)),
        Stage::map("structural", |c: PrecursorCandidate, x: &CandidateCtx| apply_structural(c, x.config)),
        Stage::join_reference("dominance", |c: PrecursorCandidate, x: &CandidateCtx| {
            apply_dominance(c, x.reference, x.config)
        }),
    ];
    for s in &gates {
        ds = run.apply(s, ds, &cctx)?;
    }
    let candidates = ds.into_vec();

    let chrom_names: Vec<String> = genome.chroms.iter().map(|c| c.name.clone()).collect();
    let n_cand = candidates.len();
    let t = Instant::now();
    let (predictions, verdicts) = collect_predictions(candidates, &chrom_names);
    run.record("collect_predictions", StageKind::Map, n_cand, predictions.len(), t.elapsed().as_secs_f64());

    let library_ids: Vec<String> = libraries.iter().map(|l| l.id.clone()).collect();
    let library_totals: Vec<u64> = libraries.iter().map(Library::total).collect();
    let summaries = libraries
        .iter()
        .enumerate()
        .map(|(i, l)| LibrarySummary {
            library: l.id.clone(),
            raw_reads: l.raw_reads,
            dropped_reads: l.dropped_reads,
            unique_sequences: l.reads.len(),
            total_reads: library_totals[i],
            aligned_reads: aligned_reads[i],
            predicted_mirnas: predictions.iter().filter(|p| p.libraries.contains(&i)).count(),
        })
        .collect();
    Ok(PredictionRun {
        library_ids,
        library_totals,
        chrom_names,
        summaries,
        predictions,
        verdicts,
        metrics: run.finish(),
    })
}

fn better(a: &PrecursorCandidate, b: &PrecursorCandidate) -> bool {
    a.verdict.rank() > b.verdict.rank()
}

/// Keeps the best window per (sequence, locus), tallies verdicts and groups
/// passing loci into predictions with de-duplicated precursors.
fn collect_predictions(
    candidates: Vec<PrecursorCandidate>,
    chrom_names: &[String],
) -> (Vec<MirnaPrediction>, Vec<(String, usize)>) {
    let mut best: BTreeMap<(String, Locus), PrecursorCandidate> = BTreeMap::new();
    for c in candidates {
        let key = (c.record.sequence.to_string(), c.locus);
        match best.get(&key) {
            Some(b) if !better(&c, b) => {}
            _ => {
                best.insert(key, c);
            }
        }
    }
    let mut tally: BTreeMap<&'static str, usize> = BTreeMap::new();
    for c in best.values() {
        *tally.entry(c.verdict.code()).or_insert(0) += 1;
    }
    let mut codes = vec![Verdict::Pass.code()];
    codes.extend(Reason::ALL.iter().map(|&r| Verdict::Fail(r).code()));
    let verdicts = codes
        .into_iter()
        .map(|code| (code.to_string(), tally.get(code).copied().unwrap_or(0)))
        .collect();

    let mut by_seq: BTreeMap<String, MirnaPrediction> = BTreeMap::new();
    for ((seq, _), c) in best {
        if !c.verdict.is_pass() {
            continue;
        }
        let pred = by_seq.entry(seq.clone()).or_insert_with(|| MirnaPrediction {
            sequence: seq,
            counts: c.record.counts.clone(),
            loci: c.record.loci.clone(),
            precursors: Vec::new(),
            libraries: Vec::new(),
        });
        let span = c.span_region().expect("passing candidates carry a span");
        let (start, end) = c.window.to_genomic(span);
        let strand = c.window.strand;
        let chrom = chrom_names[c.window.chrom].clone();
        if pred
            .precursors
            .iter()
            .any(|p| p.chrom == chrom && p.start == start && p.end == end && p.strand == strand)
        {
            continue;
        }
        let star = c.star_sequence().map(|s| String::from_utf8_lossy(s).into_owned());
        let star_start = c.star.map(|s| c.window.to_genomic(s).0);
        pred.precursors.push(PrecursorRecord {
            chrom,
            start,
            end,
            strand,
            mature_start: c.locus.start,
            star,
            star_start,
            sequence: String::from_utf8_lossy(c.precursor_sequence().expect("span")).into_owned(),
            structure: c.precursor_dot_bracket().expect("span"),
            libraries: c.expressed_in.clone(),
        });
        for &l in &c.expressed_in {
            if !pred.libraries.contains(&l) {
                pred.libraries.push(l);
            }
        }
    }
    let mut predictions: Vec<MirnaPrediction> = by_seq.into_values().collect();
    for p in &mut predictions {
        p.libraries.sort_unstable();
    }
    (predictions, verdicts)
}

/// Statistics layered on top of a prediction run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationRun {
    pub targets: Vec<TargetHit>,
    pub differential: Vec<DiffExprResult>,
    pub enrichment: Vec<EnrichmentResult>,
}

/// Top target genes of every predicted miRNA, in prediction order.
pub fn predict_targets(
    run: &PredictionRun,
    transcripts: &[(String, Vec<u8>)],
    config: &PipelineConfig,
    engine: &Engine,
) -> Result<Vec<TargetHit>, TargetError> {
    if run.predictions.is_empty() {
        return Ok(Vec::new());
    }
    if transcripts.is_empty() {
        return Err(TargetError::EmptyTranscriptome);
    }
    let seqs: Vec<&str> = run.predictions.iter().map(|p| p.sequence.as_str()).collect();
    let hits = engine.map_items(seqs, |m| target_rank(m, transcripts, config));
    let mut out = Vec::new();
    for h in hits {
        out.extend(h?);
    }
    Ok(out)
}

/// Fold change, Kal's test and FDR for every guide pair.
pub fn run_differential(run: &PredictionRun, guide: &[GuidePair], config: &PipelineConfig) -> Vec<DiffExprResult> {
    let profiles = run.profiles();
    guide
        .iter()
        .flat_map(|pair| differential_expression(&profiles, pair, &run.library_ids, &run.library_totals, config))
        .collect()
}

/// Per guide pair, pathway enrichment of the target genes of the pair's
/// significant miRNAs.
pub fn run_enrichment(
    guide: &[GuidePair],
    differential: &[DiffExprResult],
    targets: &[TargetHit],
    pathways: &PathwayMap,
    config: &PipelineConfig,
) -> Vec<EnrichmentResult> {
    let mut out = Vec::new();
    for pair in guide {
        let significant: BTreeSet<&str> = differential
            .iter()
            .filter(|d| &d.pair == pair && d.significant)
            .map(|d| d.mirna.as_str())
            .collect();
        let genes: BTreeSet<String> = targets
            .iter()
            .filter(|t| significant.contains(t.mirna.as_str()))
            .map(|t| t.gene.clone())
            .collect();
        for mut e in hypergeom_enrich(&genes, pathways, config.enrich_alpha) {
            e.pair = Some(pair.clone());
            out.push(e);
        }
    }
    out
}
