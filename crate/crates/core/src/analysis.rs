//! Differential expression between guide-file library pairs, target-gene
//! ranking and pathway enrichment.

use std::collections::{BTreeMap, BTreeSet};

use statrs::function::erf::erfc;
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::io::{GuidePair, PathwayMap};
use crate::model::reverse_complement_bytes;

/// Reads per million mapped reads; zero for an empty library.
pub fn rpm(count: u64, library_total: u64) -> f64 {
    if library_total == 0 {
        0.0
    } else {
        count as f64 * 1e6 / library_total as f64
    }
}

/// Raw counts and RPM of one miRNA across all libraries.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionProfile {
    pub mirna: String,
    pub counts: Vec<u64>,
    pub rpm: Vec<f64>,
}

impl ExpressionProfile {
    pub fn new(mirna: impl Into<String>, counts: Vec<u64>, library_totals: &[u64]) -> Self {
        let rpm = counts
            .iter()
            .zip(library_totals)
            .map(|(&c, &t)| rpm(c, t))
            .collect();
        Self {
            mirna: mirna.into(),
            counts,
            rpm,
        }
    }
}

/// `expt / ctrl` on RPM. A zero control gives `+inf`, or 1 when both are zero.
pub fn fold_change(ctrl_rpm: f64, expt_rpm: f64) -> f64 {
    if ctrl_rpm == 0.0 {
        if expt_rpm == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        expt_rpm / ctrl_rpm
    }
}

/// Two-sided upper normal tail, `2 (1 - Phi(|z|))`.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Kal's two-proportion z-test of `x1/n1` against `x2/n2` with a pooled
/// variance. Returns `(z, p)`; a pooled proportion of 0 or 1 gives `(0, 1)`.
pub fn kal_z_test(x1: u64, n1: u64, x2: u64, n2: u64) -> (f64, f64) {
    assert!(n1 > 0 && n2 > 0, "library totals must be positive");
    assert!(x1 <= n1 && x2 <= n2, "count exceeds library total");
    let (x1, n1, x2, n2) = (x1 as f64, n1 as f64, x2 as f64, n2 as f64);
    let p0 = (x1 + x2) / (n1 + n2);
    if p0 <= 0.0 || p0 >= 1.0 {
        return (0.0, 1.0);
    }
    let se = (p0 * (1.0 - p0) * (1.0 / n1 + 1.0 / n2)).sqrt();
    let z = (x1 / n1 - x2 / n2) / se;
    (z, two_sided_p(z))
}

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
pub fn bh_fdr(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        let v = p_values[i] * (m as f64 / (rank + 1) as f64);
        running = running.min(v);
        q[i] = running.min(1.0).max(p_values[i]);
    }
    q
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffExprResult {
    pub mirna: String,
    pub pair: GuidePair,
    pub fold_change: f64,
    pub z: f64,
    pub p: f64,
    pub q: f64,
    pub significant: bool,
}

pub fn is_significant(fold_change: f64, q: f64, config: &PipelineConfig) -> bool {
    (fold_change > config.fc_up || fold_change < config.fc_down) && q < config.alpha
}

/// Fold change, Kal's test and per-pair FDR for every profile. Library
/// indices come from `library_ids`; `library_totals` are library read totals.
pub fn differential_expression(
    profiles: &[ExpressionProfile],
    pair: &GuidePair,
    library_ids: &[String],
    library_totals: &[u64],
    config: &PipelineConfig,
) -> Vec<DiffExprResult> {
    let find = |id: &str| library_ids.iter().position(|l| l == id);
    let (Some(e), Some(c)) = (find(&pair.experiment), find(&pair.control)) else {
        return Vec::new();
    };
    let (ne, nc) = (library_totals[e], library_totals[c]);
    let tests: Vec<(f64, f64, f64)> = profiles
        .iter()
        .map(|pr| {
            let fc = fold_change(pr.rpm[c], pr.rpm[e]);
            let (z, p) = if ne == 0 || nc == 0 {
                (0.0, 1.0)
            } else {
                kal_z_test(pr.counts[e], ne, pr.counts[c], nc)
            };
            (fc, z, p)
        })
        .collect();
    let q = bh_fdr(&tests.iter().map(|t| t.2).collect::<Vec<_>>());
    profiles
        .iter()
        .zip(tests)
        .zip(q)
        .map(|((pr, (fc, z, p)), q)| DiffExprResult {
            mirna: pr.mirna.clone(),
            pair: pair.clone(),
            fold_change: fc,
            z,
            p,
            q,
            significant: is_significant(fc, q, config),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TargetError {
    #[error("no transcripts supplied for target prediction")]
    EmptyTranscriptome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetHit {
    pub mirna: String,
    pub gene: String,
    pub score: f64,
}

/// Position-weighted penalty model for miRNA:target complementarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScoring {
    pub mismatch: f64,
    pub wobble: f64,
    pub gap: f64,
    /// 1-based inclusive seed positions on the miRNA.
    pub seed: (usize, usize),
    pub seed_factor: f64,
}

impl TargetScoring {
    pub fn from_config(c: &PipelineConfig) -> Self {
        Self {
            mismatch: c.target_mismatch,
            wobble: c.target_wobble,
            gap: c.target_gap,
            seed: (c.target_seed_start, c.target_seed_end),
            seed_factor: c.target_seed_factor,
        }
    }

    fn weight(&self, pos0: usize) -> f64 {
        let p = pos0 + 1;
        if self.seed.0 <= p && p <= self.seed.1 {
            self.seed_factor
        } else {
            1.0
        }
    }
}

/// Penalty of miRNA base `m` against `r`, a base of the reverse-complemented
/// transcript (so a Watson-Crick pair reads as equality). G:U wobbles appear
/// as `G/A` and `T/C`.
fn pair_penalty(m: u8, r: u8, s: &TargetScoring) -> f64 {
    if m == r && m != b'N' {
        0.0
    } else if (m == b'G' && r == b'A') || (m == b'T' && r == b'C') {
        s.wobble
    } else {
        s.mismatch
    }
}

/// Lowest complementarity penalty of `mirna` over any site of `transcript`.
/// The whole miRNA is aligned; the site may start and end anywhere.
pub fn complementarity_score(mirna: &[u8], transcript: &[u8], s: &TargetScoring) -> f64 {
    let m = mirna.len();
    let rc = reverse_complement_bytes(transcript);
    let w: Vec<f64> = (0..m).map(|i| s.weight(i)).collect();
    // extra target base between miRNA positions i-1 and i
    let gap_t: Vec<f64> = (0..=m)
        .map(|i| {
            if i > 0 && i < m && w[i - 1] > 1.0 && w[i] > 1.0 {
                s.gap * s.seed_factor
            } else {
                s.gap
            }
        })
        .collect();
    // rows over miRNA prefix length, columns over rc positions
    let mut prev = vec![0.0f64; rc.len() + 1];
    let mut cur = vec![0.0f64; rc.len() + 1];
    for i in 1..=m {
        cur[0] = prev[0] + s.gap * w[i - 1];
        for j in 1..=rc.len() {
            let diag = prev[j - 1] + pair_penalty(mirna[i - 1], rc[j - 1], s) * w[i - 1];
            let skip_m = prev[j] + s.gap * w[i - 1];
            let skip_t = cur[j - 1] + gap_t[i];
            cur[j] = diag.min(skip_m).min(skip_t);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Gene id of a transcript: a trailing `.N` variant suffix is removed.
pub fn gene_of(transcript_id: &str) -> &str {
    match transcript_id.rsplit_once('.') {
        Some((g, v)) if !g.is_empty() && !v.is_empty() && v.bytes().all(|b| b.is_ascii_digit()) => g,
        _ => transcript_id,
    }
}

/// Scores every transcript, keeps the `target_keep` best, collapses
/// variants to genes (best score per gene) and returns the `target_top`
/// best genes ordered by `(score, gene)`.
pub fn target_rank(
    mirna: &str,
    transcripts: &[(String, Vec<u8>)],
    config: &PipelineConfig,
) -> Result<Vec<TargetHit>, TargetError> {
    if transcripts.is_empty() {
        return Err(TargetError::EmptyTranscriptome);
    }
    let scoring = TargetScoring::from_config(config);
    let mut scored: Vec<(f64, &str)> = transcripts
        .iter()
        .map(|(id, seq)| (complementarity_score(mirna.as_bytes(), seq, &scoring), id.as_str()))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    scored.truncate(config.target_keep);
    let mut genes: BTreeMap<&str, f64> = BTreeMap::new();
    for (score, id) in scored {
        let g = genes.entry(gene_of(id)).or_insert(score);
        *g = g.min(score);
    }
    let mut hits: Vec<TargetHit> = genes
        .into_iter()
        .map(|(gene, score)| TargetHit {
            mirna: mirna.to_string(),
            gene: gene.to_string(),
            score,
        })
        .collect();
    hits.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.gene.cmp(&b.gene)));
    hits.truncate(config.target_top);
    Ok(hits)
}

/// `P(X >= k)` for `X ~ Hypergeometric(N, K, n)`: population `N`, `K`
/// successes, `n` draws. Summed in log space.
pub fn hypergeom_upper_tail(big_n: u64, big_k: u64, n: u64, k: u64) -> f64 {
    assert!(big_k <= big_n && n <= big_n, "invalid hypergeometric parameters");
    let lo = k.max((n + big_k).saturating_sub(big_n));
    let hi = n.min(big_k);
    if k == 0 {
        return 1.0;
    }
    if lo > hi {
        return 0.0;
    }
    let denom = ln_binomial(big_n, n);
    let logs: Vec<f64> = (lo..=hi)
        .map(|i| ln_binomial(big_k, i) + ln_binomial(big_n - big_k, n - i) - denom)
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|&l| (l - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentResult {
    pub pair: Option<GuidePair>,
    pub pathway: String,
    pub name: String,
    /// Sample genes in the pathway.
    pub k: u64,
    /// Sample size.
    pub n: u64,
    /// Background genes in the pathway.
    pub big_k: u64,
    /// Background size.
    pub big_n: u64,
    pub p: f64,
    pub enriched: bool,
}

/// One hypergeometric test per pathway of `background`. The sample is
/// restricted to the background universe first.
pub fn hypergeom_enrich(
    sample_genes: &BTreeSet<String>,
    background: &PathwayMap,
    alpha: f64,
) -> Vec<EnrichmentResult> {
    let universe: BTreeSet<&str> = background.universe().map(String::as_str).collect();
    let sample: BTreeSet<&str> = sample_genes
        .iter()
        .map(String::as_str)
        .filter(|g| universe.contains(g))
        .collect();
    let big_n = universe.len() as u64;
    let n = sample.len() as u64;
    background
        .members()
        .into_iter()
        .map(|(pw, genes)| {
            let big_k = genes.len() as u64;
            let k = genes.iter().filter(|g| sample.contains(*g)).count() as u64;
            let p = hypergeom_upper_tail(big_n, big_k, n, k);
            EnrichmentResult {
                pair: None,
                pathway: pw.to_string(),
                name: background.names.get(pw).cloned().unwrap_or_default(),
                k,
                n,
                big_k,
                big_n,
                p,
                enriched: p < alpha,
            }
        })
        .collect()
}
