use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mirflow::align::{build_index, GenomeIndex};
use mirflow::cluster::{
    confusion_metrics, evaluate, single_linkage_cluster, venn3, BitscoreParams, ConfusionCounts, VENN_LABELS,
};
use mirflow::io::output::{parse_predicted_sequences, render_outputs, write_outputs, OutputOptions};
use mirflow::io::{
    load_annotations, load_genome, load_pathways, load_transcripts, parse_guide_file, read_library, AnnotationIndex,
    Genome,
};
use mirflow::model::NucleotideSequence;
use mirflow::pipeline::{predict_targets, run_differential, run_enrichment, run_predict, AnnotationRun};
use mirflow::simulate::{simulate_negative_set, simulate_planted_genome, PlantedParams, NEGATIVE_FACTOR};
use mirflow::{Engine, PipelineConfig};

use crate::manifest::RunManifest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub predictions: usize,
    pub peak_rss_kb: Option<u64>,
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            PipelineConfig::parse(&text).with_context(|| format!("config {}", p.display()))
        }
        None => Ok(PipelineConfig::default()),
    }
}

/// Loads the cached index at `cache` when it matches the genome, otherwise
/// builds one and stores it there.
pub fn genome_index(genome: &Genome, cache: Option<&Path>) -> Result<GenomeIndex> {
    if let Some(path) = cache {
        if path.exists() {
            if let Ok(idx) = GenomeIndex::load_for(path, genome) {
                return Ok(idx);
            }
        }
        let idx = build_index(genome);
        idx.save(path).with_context(|| format!("writing index {}", path.display()))?;
        return Ok(idx);
    }
    Ok(build_index(genome))
}

/// Prediction, then the optional annotation steps, then every output file.
pub fn run_manifest(m: &RunManifest) -> Result<RunReport> {
    m.validate()?;
    let config = &m.config;
    let engine = Engine::new(config.workers)?;
    let libraries = m
        .libraries
        .iter()
        .map(|l| read_library(l).with_context(|| format!("library {}", l.library_id)))
        .collect::<Result<Vec<_>>>()?;
    let genome = load_genome(&m.genome)?;
    let index = genome_index(&genome, m.index.as_deref())?;
    let annotations = match &m.annotations {
        Some(p) => AnnotationIndex::excluded_features(&load_annotations(p)?, &genome),
        None => AnnotationIndex::default(),
    };
    let guide = match &m.guide {
        Some(p) if m.diff => parse_guide_file(p, &m.library_ids())?,
        _ => Vec::new(),
    };

    let run = run_predict(&libraries, &genome, &index, &annotations, config, &engine)?;
    let mut annotation = AnnotationRun::default();
    if let Some(p) = &m.transcripts {
        let transcripts = load_transcripts(p)?;
        annotation.targets = predict_targets(&run, &transcripts, config, &engine)?;
    }
    if m.diff {
        annotation.differential = run_differential(&run, &guide, config);
        if m.enrich {
            let pathways = load_pathways(m.pathways.as_deref().expect("validated"))?;
            annotation.enrichment =
                run_enrichment(&guide, &annotation.differential, &annotation.targets, &pathways, config);
        }
    }
    let opts = OutputOptions {
        diff: m.diff,
        enrich: m.enrich,
    };
    let files = write_outputs(&m.out_dir, &render_outputs(&run, &annotation, config, opts))?;
    Ok(RunReport {
        files,
        predictions: run.predictions.len(),
        peak_rss_kb: run.metrics.peak_rss_kb,
    })
}

/// Writes `genome.fa`, `<library>.tsv` and `truth.tsv` into `out_dir`.
pub fn simulate_planted(params: &PlantedParams, out_dir: &Path, library: &str) -> Result<Vec<PathBuf>> {
    let planted = simulate_planted_genome(params)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let files = [
        ("genome.fa".to_string(), planted.genome.to_fasta()),
        (format!("{library}.tsv"), planted.library_tsv()),
        ("truth.tsv".to_string(), planted.truth_tsv()),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        out.push(path);
    }
    Ok(out)
}

/// Sequences from a list file: the first column of each line, skipping a
/// `sequence`/`mirna` header.
pub fn read_sequence_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.starts_with("mirna\tlibrary\t") {
        return Ok(parse_predicted_sequences(&text)?.into_iter().collect());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let first = line.split('\t').next().unwrap_or("").trim();
        if first.is_empty() || (i == 0 && (first == "sequence" || first == "mirna")) {
            continue;
        }
        out.push(first.to_string());
    }
    Ok(out)
}

/// Negatives per the evaluation protocol; `count` defaults to ten per known
/// miRNA.
pub fn simulate_negatives(
    genome: &Genome,
    annotations: Option<&Path>,
    known: &[String],
    count: Option<usize>,
    seed: u64,
) -> Result<Vec<NucleotideSequence>> {
    let excluded = match annotations {
        Some(p) => AnnotationIndex::excluded_features(&load_annotations(p)?, genome),
        None => AnnotationIndex::default(),
    };
    let known: BTreeSet<NucleotideSequence> = known
        .iter()
        .map(|s| NucleotideSequence::normalize(s).with_context(|| format!("known miRNA `{s}`")))
        .collect::<Result<_>>()?;
    let count = count.unwrap_or(NEGATIVE_FACTOR * known.len());
    Ok(simulate_negative_set(genome, &excluded, &known, count, seed)?)
}

/// `sequence<TAB>label` rows with labels `positive` or `negative`.
pub fn parse_truth(text: &str) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    let mut pos = BTreeSet::new();
    let mut neg = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("sequence\t")) {
            continue;
        }
        match line.split_once('\t') {
            Some((s, "positive")) => pos.insert(s.to_string()),
            Some((s, "negative")) => neg.insert(s.to_string()),
            _ => bail!("truth line {}: expected SEQUENCE<TAB>positive|negative", i + 1),
        };
    }
    Ok((pos, neg))
}

pub fn parse_counts(s: &str) -> Result<ConfusionCounts> {
    let v: Vec<u64> = s
        .split(',')
        .map(|x| x.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .context("--counts expects TP,FP,FN,TN")?;
    let [tp, fp, fn_, tn] = v[..] else {
        bail!("--counts expects four values TP,FP,FN,TN");
    };
    Ok(ConfusionCounts { tp, fp, tn, fn_ })
}

pub fn metrics_tsv(c: ConfusionCounts) -> String {
    let m = confusion_metrics(c);
    let mut s = String::from("metric\tvalue\n");
    for (k, v) in [("tp", c.tp), ("fp", c.fp), ("fn", c.fn_), ("tn", c.tn)] {
        let _ = writeln!(s, "{k}\t{v}");
    }
    for (k, v) in [
        ("precision", m.precision),
        ("sensitivity", m.sensitivity),
        ("specificity", m.specificity),
        ("accuracy", m.accuracy),
        ("f1", m.f1),
        ("mcc", m.mcc),
    ] {
        let _ = writeln!(s, "{k}\t{v:.6}");
    }
    s
}

pub fn evaluate_files(predictions: &Path, truth: &Path) -> Result<ConfusionCounts> {
    let predicted: BTreeSet<String> = read_sequence_list(predictions)?.into_iter().collect();
    let text = std::fs::read_to_string(truth).with_context(|| format!("reading {}", truth.display()))?;
    let (pos, neg) = parse_truth(&text)?;
    Ok(evaluate(&predicted, &pos, &neg))
}

/// Clusters the union of all input sets; returns `set\tsequence\tcluster`
/// rows and, for exactly three sets, the Venn region table.
pub fn cluster_sets(
    sets: &[(String, Vec<String>)],
    config: &PipelineConfig,
    engine: &Engine,
) -> (String, Option<String>) {
    let all: Vec<String> = sets
        .iter()
        .flat_map(|(_, s)| s.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let params = BitscoreParams::from_config(config);
    let clustering = single_linkage_cluster(&all, config.bitscore_threshold, &params, engine);
    let id_of: BTreeMap<&str, &str> = all
        .iter()
        .zip(&clustering.assignment)
        .map(|(s, c)| (s.as_str(), c.as_str()))
        .collect();
    let mut table = String::from("set\tsequence\tcluster\n");
    let mut ids: Vec<BTreeSet<String>> = Vec::new();
    for (name, seqs) in sets {
        let mut set = BTreeSet::new();
        for s in seqs.iter().collect::<BTreeSet<_>>() {
            let _ = writeln!(table, "{name}\t{s}\t{}", id_of[s.as_str()]);
            set.insert(id_of[s.as_str()].to_string());
        }
        ids.push(set);
    }
    let venn = (ids.len() == 3).then(|| {
        let r = venn3(&ids[0], &ids[1], &ids[2]);
        let mut s = String::from("region\tcount\n");
        for (label, n) in VENN_LABELS.iter().zip(r) {
            let _ = writeln!(s, "{label}\t{n}");
        }
        s
    });
    (table, venn)
}
