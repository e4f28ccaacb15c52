//! Read-level filters: low-complexity (DUST), abundance and length
//! thresholds, known non-miRNA loci, and the mature-length gate.

use std::collections::HashMap;

use thiserror::Error;

use crate::config::{LenRange, PipelineConfig};
use crate::io::AnnotationIndex;
use crate::model::{NucleotideSequence, SmallRnaRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DustError {
    #[error("sequence shorter than 4 nt")]
    TooShort,
}

/// Triplet-repetition score of a whole read. Zero iff every overlapping
/// 3-mer is distinct.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DustScore(pub f64);

fn triplet_code(w: &[u8]) -> usize {
    let idx = |b: u8| match b {
        b'A' => 0,
        b'C' => 1,
        b'G' => 2,
        _ => 3,
    };
    idx(w[0]) * 16 + idx(w[1]) * 4 + idx(w[2])
}

/// `sum_t c_t (c_t - 1) / 2` over 3-mer multiplicities, divided by `T - 1`
/// where `T = len - 2` is the number of overlapping 3-mers.
pub fn dust_score(s: &NucleotideSequence) -> Result<DustScore, DustError> {
    let bytes = s.as_bytes();
    if bytes.len() < 4 {
        return Err(DustError::TooShort);
    }
    let mut counts = [0u32; 64];
    for w in bytes.windows(3) {
        counts[triplet_code(w)] += 1;
    }
    let pairs: u64 = counts
        .iter()
        .map(|&c| u64::from(c) * u64::from(c.saturating_sub(1)) / 2)
        .sum();
    let t = bytes.len() - 2;
    Ok(DustScore(pairs as f64 / (t - 1) as f64))
}

/// Keeps reads scoring at most `threshold`. Reads too short to score are kept.
pub fn passes_low_complexity(r: &SmallRnaRecord, threshold: f64) -> bool {
    match dust_score(&r.sequence) {
        Ok(DustScore(v)) => v <= threshold,
        Err(DustError::TooShort) => true,
    }
}

pub fn low_complexity_filter(records: Vec<SmallRnaRecord>, threshold: f64) -> Vec<SmallRnaRecord> {
    records
        .into_iter()
        .filter(|r| passes_low_complexity(r, threshold))
        .collect()
}

/// Inclusive bounds: total count >= `min_srna_freq`, length >= `min_srna_len`.
pub fn passes_abundance_length(r: &SmallRnaRecord, config: &PipelineConfig) -> bool {
    r.total_count() >= config.min_srna_freq && r.len() >= config.min_srna_len
}

pub fn abundance_length_filter(records: Vec<SmallRnaRecord>, config: &PipelineConfig) -> Vec<SmallRnaRecord> {
    records
        .into_iter()
        .filter(|r| passes_abundance_length(r, config))
        .collect()
}

/// False if any locus overlaps a CDS/rRNA/snoRNA/snRNA/tRNA interval.
pub fn passes_known_nonmirna(r: &SmallRnaRecord, annotations: &AnnotationIndex) -> bool {
    let len = r.len();
    !r.loci
        .iter()
        .any(|l| annotations.overlaps(l.chrom, l.start, l.start + len))
}

pub fn exclude_known_nonmirna(records: Vec<SmallRnaRecord>, annotations: &AnnotationIndex) -> Vec<SmallRnaRecord> {
    records
        .into_iter()
        .filter(|r| passes_known_nonmirna(r, annotations))
        .collect()
}

pub fn passes_mirna_length(r: &SmallRnaRecord, range: LenRange) -> bool {
    range.contains(r.len())
}

pub fn mirna_length_gate(records: Vec<SmallRnaRecord>, range: LenRange) -> Vec<SmallRnaRecord> {
    records
        .into_iter()
        .filter(|r| passes_mirna_length(r, range))
        .collect()
}

/// Naive 3-mer counter, used to cross-check [`dust_score`].
#[doc(hidden)]
pub fn dust_score_naive(s: &str) -> f64 {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for i in 0..s.len() - 2 {
        *counts.entry(&s[i..i + 3]).or_default() += 1;
    }
    let t = (s.len() - 2) as f64;
    counts.values().map(|&c| (c * (c - 1) / 2) as f64).sum::<f64>() / (t - 1.0)
}
