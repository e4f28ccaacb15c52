//! Bitscore clustering of predicted miRNAs, confusion metrics and three-way
//! set overlap.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::PipelineConfig;
use crate::dataflow::Engine;

/// Affine-gap local alignment scoring with Karlin-Altschul conversion to
/// bits. A gap of length `g` costs `gap_open + g * gap_extend`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitscoreParams {
    pub match_score: i32,
    pub mismatch: i32,
    pub gap_open: i32,
    pub gap_extend: i32,
    pub lambda: f64,
    pub k: f64,
}

impl Default for BitscoreParams {
    fn default() -> Self {
        Self {
            match_score: 1,
            mismatch: -3,
            gap_open: 5,
            gap_extend: 2,
            lambda: 1.374,
            k: 0.711,
        }
    }
}

impl BitscoreParams {
    pub fn from_config(c: &PipelineConfig) -> Self {
        Self {
            lambda: c.bitscore_lambda,
            k: c.bitscore_k,
            ..Self::default()
        }
    }

    pub fn bits(&self, raw: i32) -> f64 {
        (self.lambda * raw as f64 - self.k.ln()) / std::f64::consts::LN_2
    }
}

/// Best Smith-Waterman score with affine gaps (Gotoh).
pub fn local_align_score(a: &[u8], b: &[u8], p: &BitscoreParams) -> i32 {
    let n = b.len();
    let neg = i32::MIN / 4;
    let first = p.gap_open + p.gap_extend;
    let mut h_prev = vec![0i32; n + 1];
    let mut e_prev = vec![neg; n + 1];
    let mut h = vec![0i32; n + 1];
    let mut e = vec![neg; n + 1];
    let mut best = 0;
    for &ca in a {
        let mut f = neg;
        h[0] = 0;
        for j in 1..=n {
            // gap in b (vertical), gap in a (horizontal)
            e[j] = (e_prev[j] - p.gap_extend).max(h_prev[j] - first);
            f = (f - p.gap_extend).max(h[j - 1] - first);
            let s = if ca == b[j - 1] { p.match_score } else { p.mismatch };
            h[j] = 0.max(h_prev[j - 1] + s).max(e[j]).max(f);
            best = best.max(h[j]);
        }
        std::mem::swap(&mut h, &mut h_prev);
        std::mem::swap(&mut e, &mut e_prev);
    }
    best
}

pub fn local_align_bitscore(a: &[u8], b: &[u8], p: &BitscoreParams) -> f64 {
    p.bits(local_align_score(a, b, p))
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of the "bitscore > threshold" graph. Each cluster
/// is named by its lexicographically smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Cluster id for each input, in input order.
    pub assignment: Vec<String>,
    /// Members of each cluster, sorted, keyed by cluster id.
    pub clusters: BTreeMap<String, Vec<String>>,
}

impl Clustering {
    pub fn ids(&self) -> BTreeSet<String> {
        self.clusters.keys().cloned().collect()
    }
}

/// Single-linkage clustering. Pairwise scores are computed one row per
/// work item on `engine`.
pub fn single_linkage_cluster(
    sequences: &[String],
    threshold: f64,
    params: &BitscoreParams,
    engine: &Engine,
) -> Clustering {
    let n = sequences.len();
    let seqs: Vec<&[u8]> = sequences.iter().map(|s| s.as_bytes()).collect();
    let rows: Vec<Vec<usize>> = engine.map_items((0..n).collect(), |i| {
        (i + 1..n)
            .filter(|&j| local_align_bitscore(seqs[i], seqs[j], params) > threshold)
            .collect()
    });
    let mut dsu = DisjointSets::new(n);
    for (i, row) in rows.iter().enumerate() {
        for &j in row {
            dsu.union(i, j);
        }
    }
    let mut members: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
    for (i, s) in sequences.iter().enumerate() {
        members.entry(dsu.find(i)).or_default().insert(s.as_str());
    }
    let root_id: BTreeMap<usize, String> = members
        .iter()
        .map(|(&r, m)| (r, m.iter().next().expect("non-empty").to_string()))
        .collect();
    let assignment = (0..n).map(|i| root_id[&dsu.find(i)].clone()).collect();
    let clusters = members
        .into_iter()
        .map(|(r, m)| (root_id[&r].clone(), m.into_iter().map(str::to_string).collect()))
        .collect();
    Clustering { assignment, clusters }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Standard binary-classification metrics; any `0/0` is reported as 0.
pub fn confusion_metrics(c: ConfusionCounts) -> Metrics {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    Metrics {
        precision: ratio(tp, tp + fp),
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        accuracy: ratio(tp + tn, tp + fp + tn + fn_),
        f1: ratio(2.0 * tp, 2.0 * tp + fp + fn_),
        mcc: ratio(tp * tn - fp * fn_, mcc_den),
    }
}

/// Counts predictions against labelled truth. Predicted sequences that are
/// not labelled positive count as false positives.
pub fn evaluate(predicted: &BTreeSet<String>, positives: &BTreeSet<String>, negatives: &BTreeSet<String>) -> ConfusionCounts {
    let tp = predicted.intersection(positives).count() as u64;
    let fp = predicted.difference(positives).count() as u64;
    let fn_ = positives.len() as u64 - tp;
    let tn = negatives.difference(predicted).count() as u64;
    ConfusionCounts { tp, fp, tn, fn_ }
}

/// Exclusive region sizes of three sets, in the order
/// `a, b, c, ab, ac, bc, abc`.
pub fn venn3(a: &BTreeSet<String>, b: &BTreeSet<String>, c: &BTreeSet<String>) -> [usize; 7] {
    let mut r = [0usize; 7];
    let all: BTreeSet<&String> = a.iter().chain(b).chain(c).collect();
    for x in all {
        let key = (a.contains(x), b.contains(x), c.contains(x));
        let slot = match key {
            (true, false, false) => 0,
            (false, true, false) => 1,
            (false, false, true) => 2,
            (true, true, false) => 3,
            (true, false, true) => 4,
            (false, true, true) => 5,
            (true, true, true) => 6,
            (false, false, false) => unreachable!(),
        };
        r[slot] += 1;
    }
    r
}

pub const VENN_LABELS: [&str; 7] = ["a", "b", "c", "ab", "ac", "bc", "abc"];

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Best global affine alignment of `a` against `b`, exhaustively.
    fn global(a: &[u8], b: &[u8], p: &BitscoreParams) -> i32 {
        // state: positions and whether the previous column was a gap in a or b
        fn rec(a: &[u8], b: &[u8], i: usize, j: usize, prev: u8, p: &BitscoreParams) -> i32 {
            if i == a.len() && j == b.len() {
                return 0;
            }
            let mut best = i32::MIN / 4;
            if i < a.len() && j < b.len() {
                let s = if a[i] == b[j] { p.match_score } else { p.mismatch };
                best = best.max(s + rec(a, b, i + 1, j + 1, 0, p));
            }
            if i < a.len() {
                let c = if prev == 1 { p.gap_extend } else { p.gap_open + p.gap_extend };
                best = best.max(rec(a, b, i + 1, j, 1, p) - c);
            }
            if j < b.len() {
                let c = if prev == 2 { p.gap_extend } else { p.gap_open + p.gap_extend };
                best = best.max(rec(a, b, i, j + 1, 2, p) - c);
            }
            best
        }
        rec(a, b, 0, 0, 0, p)
    }

    /// Maximum over all substring pairs of the global score (0 for empty).
    pub fn local_score(a: &[u8], b: &[u8], p: &BitscoreParams) -> i32 {
        let mut best = 0;
        for i0 in 0..a.len() {
            for i1 in i0 + 1..=a.len() {
                for j0 in 0..b.len() {
                    for j1 in j0 + 1..=b.len() {
                        best = best.max(global(&a[i0..i1], &b[j0..j1], p));
                    }
                }
            }
        }
        best
    }

    /// Components by breadth-first search over the full score matrix.
    pub fn components(seqs: &[String], threshold: f64, p: &BitscoreParams) -> BTreeSet<BTreeSet<String>> {
        let n = seqs.len();
        let adj: Vec<Vec<bool>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| i != j && local_align_bitscore(seqs[i].as_bytes(), seqs[j].as_bytes(), p) > threshold)
                    .collect()
            })
            .collect();
        let mut seen = vec![false; n];
        let mut out = BTreeSet::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut queue = std::collections::VecDeque::from([s]);
            seen[s] = true;
            while let Some(u) = queue.pop_front() {
                comp.insert(seqs[u].clone());
                for v in 0..n {
                    if adj[u][v] && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            out.insert(comp);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p() -> BitscoreParams {
        BitscoreParams::default()
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bitscore_examples() {
        let a = b"TGACAGAAGAGAGTGAGCACA";
        assert_eq!(local_align_score(a, a, &p()), 21);
        let bits = local_align_bitscore(a, a, &p());
        assert!((bits - 42.1).abs() < 0.05, "{bits}");
        assert!((p().bits(3) - 6.44).abs() < 0.01);
        assert_eq!(local_align_score(b"AAAAAAAAAA", b"CCCCCCCCCC", &p()), 0);
        // one internal 1-nt gap: 10 + 10 - 7
        assert_eq!(local_align_score(b"ACGTACGTACTTGCATGCAT", b"ACGTACGTACGTTGCATGCAT", &p()), 13);
    }

    #[test]
    fn clustering_examples() {
        let e = Engine::sequential();
        let x = "TGACAGAAGAGAGTGAGCACA";
        let y = "CCCCGGGGAAAATTTTCCCCG";
        let c = single_linkage_cluster(&strings(&[x, x, y]), 20.0, &p(), &e);
        assert_eq!(c.clusters.len(), 2);
        assert_eq!(c.assignment[0], c.assignment[1]);

        // a~b and b~c share 15-nt blocks; a and c share nothing long
        let a = "ACGTTGCAAGCTTCGGAAAAAAAAAAAAAAAAAAA";
        let b = "ACGTTGCAAGCTTCGCTAGGATCCATGGTCAAGTG";
        let cc = "TTTTTTTTTTTTTTTCTAGGATCCATGGTCAAGTG";
        assert!(local_align_bitscore(a.as_bytes(), b.as_bytes(), &p()) > 20.0);
        assert!(local_align_bitscore(b.as_bytes(), cc.as_bytes(), &p()) > 20.0);
        assert!(local_align_bitscore(a.as_bytes(), cc.as_bytes(), &p()) <= 20.0);
        let c = single_linkage_cluster(&strings(&[a, b, cc]), 20.0, &p(), &e);
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.assignment, vec![b.to_string(); 3]);
    }

    #[test]
    fn clusters_match_bfs_oracle_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base: Vec<Vec<u8>> = (0..10)
            .map(|_| (0..21).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect())
            .collect();
        // 50 sequences: mutated copies of 10 founders plus fresh randoms
        let seqs: Vec<String> = (0..50)
            .map(|i| {
                let mut s = if i < 35 { base[i % 10].clone() } else { (0..21).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect() };
                for _ in 0..rng.gen_range(0..4) {
                    let k = rng.gen_range(0..21);
                    s[k] = b"ACGT"[rng.gen_range(0..4)];
                }
                String::from_utf8(s).unwrap()
            })
            .collect();
        let engine = Engine::new(4).unwrap();
        let c = single_linkage_cluster(&seqs, 20.0, &p(), &engine);
        let got: BTreeSet<BTreeSet<String>> = c.clusters.values().map(|m| m.iter().cloned().collect()).collect();
        assert_eq!(got, oracle::components(&seqs, 20.0, &p()));
        let mut rev = seqs.clone();
        rev.reverse();
        let c2 = single_linkage_cluster(&rev, 20.0, &p(), &Engine::sequential());
        assert_eq!(c.clusters, c2.clusters);
    }

    #[test]
    fn metrics_from_reference_counts() {
        let m = confusion_metrics(ConfusionCounts { tp: 84, fp: 9, fn_: 16, tn: 991 });
        assert!((m.f1 - 0.87).abs() <= 0.005 && (m.mcc - 0.86).abs() <= 0.005);
        let m = confusion_metrics(ConfusionCounts { tp: 39, fp: 54, fn_: 151, tn: 757_514 });
        assert!((m.f1 - 0.276).abs() <= 0.001 && (m.mcc - 0.293).abs() <= 0.001);
        let m = confusion_metrics(ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 10 });
        assert_eq!((m.f1, m.mcc, m.precision, m.sensitivity), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn venn_examples() {
        let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(venn3(&set(&["a", "b"]), &set(&["c", "d", "e"]), &set(&["f", "g", "h", "i"])), [2, 3, 4, 0, 0, 0, 0]);
        let s = set(&["x", "y"]);
        assert_eq!(venn3(&s, &s, &s), [0, 0, 0, 0, 0, 0, 2]);
    }

    #[test]
    fn evaluation_counts() {
        let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let c = evaluate(&set(&["p1", "p2", "n1", "other"]), &set(&["p1", "p2", "p3"]), &set(&["n1", "n2", "n3"]));
        assert_eq!(c, ConfusionCounts { tp: 2, fp: 2, fn_: 1, tn: 2 });
    }

    proptest! {
        #[test]
        fn gotoh_matches_exhaustive(a in "[ACGT]{1,6}", b in "[ACGT]{1,6}") {
            let fast = local_align_score(a.as_bytes(), b.as_bytes(), &p());
            prop_assert_eq!(fast, oracle::local_score(a.as_bytes(), b.as_bytes(), &p()));
            prop_assert_eq!(fast, local_align_score(b.as_bytes(), a.as_bytes(), &p()));
        }

        #[test]
        fn metric_identities(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
            let m = confusion_metrics(ConfusionCounts { tp, fp, tn, fn_ });
            let f1 = if tp + fp + fn_ == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
            prop_assert!((m.f1 - f1).abs() < 1e-12);
            let sw = confusion_metrics(ConfusionCounts { tp: tn, fp: fn_, tn: tp, fn_: fp });
            prop_assert!((m.mcc - sw.mcc).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&m.mcc));
        }

        #[test]
        fn venn_partitions_union(a in proptest::collection::btree_set("[a-e]", 0..5),
                                 b in proptest::collection::btree_set("[a-e]", 0..5),
                                 c in proptest::collection::btree_set("[a-e]", 0..5)) {
            let r = venn3(&a, &b, &c);
            let union: BTreeSet<_> = a.iter().chain(&b).chain(&c).collect();
            prop_assert_eq!(r.iter().sum::<usize>(), union.len());
        }
    }
}
