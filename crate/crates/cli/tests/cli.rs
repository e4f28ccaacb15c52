use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mirflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirflow")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).trim().to_string()
}

fn simulate(dir: &Path) -> PathBuf {
    let sim = dir.join("sim");
    let o = mirflow(&[
        "simulate", "planted", "--negatives", "20", "--noise-reads", "100", "--seed", "4", "--out-dir", s(&sim),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    sim
}

#[test]
fn config_overrides_reach_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path());
    let cfg = dir.path().join("strict.cfg");
    std::fs::write(&cfg, "# nothing passes\nmin_mirna_freq = 1000000\n").unwrap();
    let out = dir.path().join("out");
    let o = mirflow(&[
        "predict", s(&sim.join("planted.tsv")), "--genome", s(&sim.join("genome.fa")), "--config", s(&cfg),
        "--out-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("predictions=0\tfiles=10"));
    let preds = std::fs::read_to_string(out.join("mirna_predictions.tsv")).unwrap();
    assert_eq!(preds.lines().count(), 1);
    let params = std::fs::read_to_string(out.join("run_parameters.tsv")).unwrap();
    assert!(params.lines().any(|l| l == "min_mirna_freq\t1000000"));
}

#[test]
fn bad_config_is_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "min_mirna_freq = 5\nno_such_key = 1\n").unwrap();
    let o = mirflow(&["predict", "x.tsv", "--genome", "g.fa", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1);
    assert!(e.contains("no_such_key"), "{e}");
}

#[test]
fn usage_errors_exit_2() {
    let o = mirflow(&["predict", "--genome"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn guide_naming_unknown_library_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path());
    let lib = sim.join("planted.tsv");
    let other = dir.path().join("Lib2.tsv");
    std::fs::copy(&lib, &other).unwrap();
    let guide = dir.path().join("guide.txt");
    std::fs::write(&guide, "Experiment->Control\nLib2->Lib9\n").unwrap();
    let out = dir.path().join("out");
    let o = mirflow(&[
        "pipeline", s(&lib), s(&other), "--genome", s(&sim.join("genome.fa")), "--guide", s(&guide), "--diff",
        "--out-dir", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Lib9"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn mixed_library_formats_are_rejected() {
    let o = mirflow(&["predict", "a.tsv", "b.fastq", "--genome", "g.fa"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mix"), "{}", stderr(&o));
}

#[test]
fn index_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path());
    let idx = dir.path().join("genome.idx");
    let o = mirflow(&["index", "--genome", s(&sim.join("genome.fa")), "--out", s(&idx)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let before = std::fs::metadata(&idx).unwrap().modified().unwrap();
    let out = dir.path().join("out");
    let o = mirflow(&[
        "predict", s(&sim.join("planted.tsv")), "--genome", s(&sim.join("genome.fa")), "--index", s(&idx),
        "--out-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::metadata(&idx).unwrap().modified().unwrap(), before);
}

#[test]
fn cluster_three_sets_writes_venn() {
    let dir = tempfile::tempdir().unwrap();
    let a = "TGACAGAAGAGAGTGAGCACA";
    let a_variant = "TGACAGAAGAGAGTGAGCACT";
    let b = "TTCCACAGCTTTCTTGAACTG";
    let c = "TCGGACCAGGCTTCATTCCCC";
    let files: Vec<PathBuf> = [("x", vec![a, b]), ("y", vec![a_variant]), ("z", vec![c, a])]
        .iter()
        .map(|(n, seqs)| {
            let p = dir.path().join(format!("{n}.txt"));
            std::fs::write(&p, seqs.join("\n")).unwrap();
            p
        })
        .collect();
    let out = dir.path().join("clusters");
    let mut args = vec!["cluster"];
    args.extend(files.iter().map(|p| s(p)));
    args.extend(["--out-dir", s(&out)]);
    let o = mirflow(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let venn = std::fs::read_to_string(out.join("venn.tsv")).unwrap();
    let count = |region: &str| -> usize {
        venn.lines().find_map(|l| l.strip_prefix(&format!("{region}\t"))).unwrap().parse().unwrap()
    };
    // a and its variant collapse into one cluster shared by all three sets
    assert_eq!(count("abc"), 1);
    assert_eq!(count("a") + count("c"), 2);
}

#[test]
fn evaluate_rejects_malformed_counts() {
    let o = mirflow(&["evaluate", "--counts", "1,2,3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}
