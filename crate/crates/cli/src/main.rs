use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mirflow::io::{load_genome, LibraryFormat};
use mirflow::simulate::PlantedParams;
use mirflow::Engine;
use mirflow_cli::commands::{self, RunReport};
use mirflow_cli::{library_inputs, RunManifest};

#[derive(Parser)]
#[command(name = "mirflow", version, about = "Plant miRNA prediction and functional annotation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict miRNAs and write the 10 base result files.
    Predict(RunArgs),
    /// Prediction plus differential expression, targets and enrichment.
    Pipeline(PipelineArgs),
    /// Generate synthetic inputs.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Score predictions against a truth table.
    Evaluate(EvaluateArgs),
    /// Cluster miRNA sets by local-alignment bitscore.
    Cluster(ClusterArgs),
    /// Build and cache the genome index.
    Index(IndexArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Library files; the id of each library is its file stem.
    #[arg(required = true)]
    libraries: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    genome: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Transcript FASTA for target prediction.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Index cache file, built when missing or stale.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Library format (tsv, reads, fasta, fastq); inferred from extensions otherwise.
    #[arg(long)]
    format: Option<LibraryFormat>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "mirflow_out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    guide: Option<PathBuf>,
    #[arg(long)]
    pathways: Option<PathBuf>,
    /// Differential expression per guide pair.
    #[arg(long)]
    diff: bool,
    /// Pathway enrichment of targets of significant miRNAs; needs --diff.
    #[arg(long)]
    enrich: bool,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Random genome with planted hairpins, a read library and a truth table.
    Planted(PlantedArgs),
    /// Random genomic negatives, 18-25 nt.
    Negatives(NegativesArgs),
}

#[derive(Args)]
struct PlantedArgs {
    #[arg(long, default_value_t = 200_000)]
    genome_len: usize,
    #[arg(long, default_value_t = 1)]
    chroms: usize,
    #[arg(long, default_value_t = 20)]
    hairpins: usize,
    #[arg(long, default_value_t = 30)]
    stem_len: usize,
    #[arg(long, default_value_t = 200)]
    negatives: usize,
    #[arg(long, default_value_t = 2000)]
    noise_reads: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "planted")]
    library: String,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct NegativesArgs {
    #[arg(long)]
    genome: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Known miRNAs, one per line (first column).
    #[arg(long)]
    known: PathBuf,
    /// Defaults to 10 per known miRNA.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "counts")]
    predictions: Option<PathBuf>,
    #[arg(long, required_unless_present = "counts")]
    truth: Option<PathBuf>,
    /// Score raw counts instead: TP,FP,FN,TN.
    #[arg(long, conflicts_with_all = ["predictions", "truth"])]
    counts: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Prediction files or sequence lists; one set per file.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "mirflow_clusters")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    genome: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn manifest(a: &RunArgs) -> Result<RunManifest> {
    let mut config = commands::load_config(a.config.as_deref())?;
    if let Some(w) = a.workers {
        config.workers = w.max(1);
    }
    let libraries = library_inputs(&a.libraries, a.format)?;
    let mut m = RunManifest::new(config, libraries, a.genome.clone(), a.out_dir.clone());
    m.annotations = a.annotations.clone();
    m.transcripts = a.transcripts.clone();
    m.index = a.index.clone();
    Ok(m)
}

fn report(r: &RunReport, out_dir: &Path) {
    let rss = r.peak_rss_kb.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
    println!(
        "predictions={}\tfiles={}\tout_dir={}\tpeak_rss_kb={rss}",
        r.predictions,
        r.files.len(),
        out_dir.display()
    );
}

fn write_or_print(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Predict(a) => {
            let m = manifest(&a)?;
            report(&commands::run_manifest(&m)?, &m.out_dir);
        }
        Command::Pipeline(a) => {
            let mut m = manifest(&a.run)?;
            m.guide = a.guide;
            m.pathways = a.pathways;
            m.diff = a.diff;
            m.enrich = a.enrich;
            report(&commands::run_manifest(&m)?, &m.out_dir);
        }
        Command::Simulate(SimulateCommand::Planted(a)) => {
            let params = PlantedParams {
                genome_len: a.genome_len,
                n_chroms: a.chroms,
                n_hairpins: a.hairpins,
                stem_len: a.stem_len,
                n_negatives: a.negatives,
                noise_reads: a.noise_reads,
                seed: a.seed,
                ..PlantedParams::default()
            };
            for f in commands::simulate_planted(&params, &a.out_dir, &a.library)? {
                println!("{}", f.display());
            }
        }
        Command::Simulate(SimulateCommand::Negatives(a)) => {
            let genome = load_genome(&a.genome)?;
            let known = commands::read_sequence_list(&a.known)?;
            let neg = commands::simulate_negatives(&genome, a.annotations.as_deref(), &known, a.count, a.seed)?;
            let body: String = neg.iter().map(|s| format!("{s}\n")).collect();
            std::fs::write(&a.out, body).with_context(|| format!("writing {}", a.out.display()))?;
            println!("negatives={}\tknown={}", neg.len(), known.len());
        }
        Command::Evaluate(a) => {
            let counts = match (&a.counts, &a.predictions, &a.truth) {
                (Some(c), _, _) => commands::parse_counts(c)?,
                (None, Some(p), Some(t)) => commands::evaluate_files(p, t)?,
                _ => anyhow::bail!("evaluate needs --predictions and --truth, or --counts"),
            };
            write_or_print(a.out.as_deref(), &commands::metrics_tsv(counts))?;
        }
        Command::Cluster(a) => {
            let mut config = commands::load_config(a.config.as_deref())?;
            if let Some(w) = a.workers {
                config.workers = w.max(1);
            }
            let engine = Engine::new(config.workers)?;
            let sets = a
                .inputs
                .iter()
                .map(|p| {
                    let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("set").to_string();
                    Ok((name, commands::read_sequence_list(p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let (table, venn) = commands::cluster_sets(&sets, &config, &engine);
            std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
            std::fs::write(a.out_dir.join("clusters.tsv"), table)?;
            if let Some(v) = venn {
                std::fs::write(a.out_dir.join("venn.tsv"), v)?;
            }
        }
        Command::Index(a) => {
            let genome = load_genome(&a.genome)?;
            let idx = mirflow::align::build_index(&genome);
            idx.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
            println!("index={}\tgenome_hash={}", a.out.display(), idx.genome_hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
