//! Sequence primitives and the record types that flow through the pipeline.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("empty sequence")]
    Empty,
    #[error("invalid base at position {0}")]
    InvalidBase(usize),
}

/// A DNA-alphabet nucleotide sequence (`A`, `C`, `G`, `T` only, length >= 1).
///
/// RNA input is stored with `U` mapped to `T`, so reads and the genome share
/// one alphabet.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NucleotideSequence(Box<[u8]>);

impl NucleotideSequence {
    /// Normalizes raw text: uppercases, maps `U` to `T` and rejects anything
    /// else outside `ACGT`.
    pub fn normalize(raw: &str) -> Result<Self, SequenceError> {
        Self::normalize_bytes(raw.as_bytes())
    }

    pub fn normalize_bytes(raw: &[u8]) -> Result<Self, SequenceError> {
        if raw.is_empty() {
            return Err(SequenceError::Empty);
        }
        let mut out = Vec::with_capacity(raw.len());
        for (i, &b) in raw.iter().enumerate() {
            let n = match b {
                b'A' | b'a' => b'A',
                b'C' | b'c' => b'C',
                b'G' | b'g' => b'G',
                b'T' | b't' | b'U' | b'u' => b'T',
                _ => return Err(SequenceError::InvalidBase(i)),
            };
            out.push(n);
        }
        Ok(Self(out.into_boxed_slice()))
    }

    /// Wraps bytes already known to be uppercase `ACGT`.
    pub(crate) fn from_acgt_unchecked(bases: Vec<u8>) -> Self {
        debug_assert!(!bases.is_empty() && bases.iter().all(|b| b"ACGT".contains(b)));
        Self(bases.into_boxed_slice())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        // only ASCII ACGT is ever stored
        std::str::from_utf8(&self.0).expect("ascii")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reverse_complement(&self) -> Self {
        Self(reverse_complement_bytes(&self.0).into_boxed_slice())
    }
}

impl fmt::Display for NucleotideSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for NucleotideSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seq({})", self.as_str())
    }
}

impl std::str::FromStr for NucleotideSequence {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::normalize(s)
    }
}

#[inline]
pub fn complement(b: u8) -> u8 {
    match b {
        b'A' => b'T',
        b'T' => b'A',
        b'C' => b'G',
        b'G' => b'C',
        other => other,
    }
}

/// Reverse complement over raw bytes; non-ACGT bytes (e.g. `N`) map to themselves.
pub fn reverse_complement_bytes(s: &[u8]) -> Vec<u8> {
    s.iter().rev().map(|&b| complement(b)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strand {
    Plus,
    Minus,
}

impl Strand {
    pub fn symbol(self) -> char {
        match self {
            Strand::Plus => '+',
            Strand::Minus => '-',
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "+" => Some(Strand::Plus),
            "-" => Some(Strand::Minus),
            _ => None,
        }
    }
}

impl fmt::Display for Strand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Genomic placement of a read. `chrom` indexes into the genome's chromosome
/// list; `start` is a 0-based offset on the forward strand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Locus {
    pub chrom: usize,
    pub start: usize,
    pub strand: Strand,
}

/// A unique read sequence with one abundance count per input library.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmallRnaRecord {
    pub sequence: NucleotideSequence,
    pub counts: Vec<u64>,
    pub loci: Vec<Locus>,
}

impl SmallRnaRecord {
    pub fn new(sequence: NucleotideSequence, counts: Vec<u64>) -> Self {
        Self {
            sequence,
            counts,
            loci: Vec::new(),
        }
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

pub type SharedRecord = Arc<SmallRnaRecord>;
