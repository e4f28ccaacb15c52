//! Seeded synthetic data: random negative sRNAs and genomes with planted
//! hairpins for end-to-end recovery tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::io::{AnnotationIndex, Chromosome, Genome};
use crate::model::{reverse_complement_bytes, NucleotideSequence, Strand};

pub const NEGATIVE_LEN_MIN: usize = 18;
pub const NEGATIVE_LEN_MAX: usize = 25;
/// Draws allowed per requested negative before giving up.
pub const RETRY_FACTOR: usize = 1000;
/// Negatives per positive in the evaluation protocol.
pub const NEGATIVE_FACTOR: usize = 10;
pub const MATURE_LEN: usize = 21;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("genome is empty")]
    EmptyGenome,
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("sampling exhausted after {attempts} draws ({found} of {wanted} sequences)")]
    ExhaustedSampling {
        attempts: usize,
        found: usize,
        wanted: usize,
    },
    #[error("stem length {0} is below 25")]
    StemTooShort(usize),
    #[error("genome of {genome_len} nt cannot hold {n_hairpins} hairpins")]
    GenomeTooSmall { genome_len: usize, n_hairpins: usize },
}

fn random_bases(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect()
}

/// Picks a chromosome with probability proportional to its usable length.
fn pick_chrom(rng: &mut ChaCha8Rng, genome: &Genome, len: usize) -> Option<usize> {
    let usable: Vec<usize> = genome
        .chroms
        .iter()
        .map(|c| (c.seq.len() + 1).saturating_sub(len))
        .collect();
    let total: usize = usable.iter().sum();
    if total == 0 {
        return None;
    }
    let mut x = rng.gen_range(0..total);
    for (i, &u) in usable.iter().enumerate() {
        if x < u {
            return Some(i);
        }
        x -= u;
    }
    unreachable!()
}

/// Draws `count` distinct genomic substrings of length 18 to 25 at uniform
/// positions and strands. Draws containing `N`, equal to a known miRNA, or
/// overlapping an excluded interval are rejected.
pub fn simulate_negative_set(
    genome: &Genome,
    excluded: &AnnotationIndex,
    known: &BTreeSet<NucleotideSequence>,
    count: usize,
    seed: u64,
) -> Result<Vec<NucleotideSequence>, SimError> {
    if genome.is_empty() {
        return Err(SimError::EmptyGenome);
    }
    if count == 0 {
        return Err(SimError::ZeroCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let cap = count.saturating_mul(RETRY_FACTOR);
    let mut attempts = 0;
    while out.len() < count {
        if attempts == cap {
            return Err(SimError::ExhaustedSampling {
                attempts,
                found: out.len(),
                wanted: count,
            });
        }
        attempts += 1;
        let len = rng.gen_range(NEGATIVE_LEN_MIN..=NEGATIVE_LEN_MAX);
        let Some(ci) = pick_chrom(&mut rng, genome, len) else {
            continue;
        };
        let chrom = &genome.chroms[ci].seq;
        let start = rng.gen_range(0..=chrom.len() - len);
        let minus = rng.gen_bool(0.5);
        let slice = &chrom[start..start + len];
        if slice.contains(&b'N') || excluded.overlaps(ci, start, start + len) {
            continue;
        }
        let bases = if minus { reverse_complement_bytes(slice) } else { slice.to_vec() };
        let seq = NucleotideSequence::from_acgt_unchecked(bases);
        if known.contains(&seq) || !seen.insert(seq.clone()) {
            continue;
        }
        out.push(seq);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedParams {
    pub genome_len: usize,
    pub n_chroms: usize,
    pub n_hairpins: usize,
    pub stem_len: usize,
    pub loop_len: usize,
    pub n_negatives: usize,
    /// Distinct background reads, each with a count in 1..=20.
    pub noise_reads: usize,
    /// Mature and negative reads get counts in `[min_count, 10 * min_count]`.
    pub min_count: u64,
    pub seed: u64,
}

impl Default for PlantedParams {
    fn default() -> Self {
        Self {
            genome_len: 200_000,
            n_chroms: 1,
            n_hairpins: 20,
            stem_len: 30,
            loop_len: 6,
            n_negatives: 200,
            noise_reads: 2000,
            min_count: 200,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedHairpin {
    pub chrom: usize,
    /// Genomic extent of the stem-loop, half-open.
    pub start: usize,
    pub end: usize,
    pub strand: Strand,
    pub mature: NucleotideSequence,
    /// Genomic start of the mature read.
    pub mature_start: usize,
    pub five_prime_arm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedGenome {
    pub genome: Genome,
    pub hairpins: Vec<PlantedHairpin>,
    pub negatives: Vec<NucleotideSequence>,
    /// Collapsed read library, sorted by sequence.
    pub library: Vec<(NucleotideSequence, u64)>,
}

impl PlantedGenome {
    pub fn positives(&self) -> BTreeSet<String> {
        self.hairpins.iter().map(|h| h.mature.to_string()).collect()
    }

    pub fn negative_set(&self) -> BTreeSet<String> {
        self.negatives.iter().map(|s| s.to_string()).collect()
    }

    /// `sequence<TAB>label` rows, positives first.
    pub fn truth_tsv(&self) -> String {
        truth_tsv(&self.positives(), &self.negative_set())
    }

    /// The library in `SEQ<TAB>COUNT` form.
    pub fn library_tsv(&self) -> String {
        let mut s = String::new();
        for (seq, n) in &self.library {
            let _ = writeln!(s, "{seq}\t{n}");
        }
        s
    }

    pub fn total_reads(&self) -> u64 {
        self.library.iter().map(|(_, n)| n).sum()
    }
}

pub fn truth_tsv(positives: &BTreeSet<String>, negatives: &BTreeSet<String>) -> String {
    let mut s = String::from("sequence\tlabel\n");
    for p in positives {
        let _ = writeln!(s, "{p}\tpositive");
    }
    for n in negatives {
        let _ = writeln!(s, "{n}\tnegative");
    }
    s
}

/// Builds a random genome holding `n_hairpins` perfect stem-loops, one per
/// equal-width slot. Each hairpin expresses a 21-nt mature read from one
/// arm; a single G:T wobble inside the duplex keeps the opposite arm from
/// matching the read exactly. Negatives are sampled away from the hairpins
/// and expressed like the matures.
pub fn simulate_planted_genome(p: &PlantedParams) -> Result<PlantedGenome, SimError> {
    if p.stem_len < 25 {
        return Err(SimError::StemTooShort(p.stem_len));
    }
    let n_chroms = p.n_chroms.max(1);
    let chrom_len = p.genome_len / n_chroms;
    let per_chrom = p.n_hairpins.div_ceil(n_chroms);
    let hp_len = 2 * p.stem_len + p.loop_len;
    let slot = if per_chrom == 0 { chrom_len } else { chrom_len / per_chrom };
    if per_chrom > 0 && slot < 2 * hp_len + 700 {
        return Err(SimError::GenomeTooSmall {
            genome_len: p.genome_len,
            n_hairpins: p.n_hairpins,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut chroms: Vec<Chromosome> = (0..n_chroms)
        .map(|i| Chromosome {
            name: format!("sim{}", i + 1),
            seq: random_bases(&mut rng, chrom_len),
        })
        .collect();

    let mut hairpins = Vec::with_capacity(p.n_hairpins);
    let mut library: BTreeMap<NucleotideSequence, u64> = BTreeMap::new();
    for h in 0..p.n_hairpins {
        let chrom = h % n_chroms;
        let slot_idx = h / n_chroms;
        let arm = random_bases(&mut rng, p.stem_len);
        let mut construct = arm.clone();
        construct.extend(random_bases(&mut rng, p.loop_len));
        construct.extend(reverse_complement_bytes(&arm));
        let partner = |i: usize| hp_len - 1 - i;

        let five_prime_arm = rng.gen_bool(0.5);
        let mature_off = if five_prime_arm {
            rng.gen_range(0..=p.stem_len - MATURE_LEN - 2)
        } else {
            rng.gen_range(p.stem_len + p.loop_len + 2..=hp_len - MATURE_LEN)
        };
        let mid = mature_off + MATURE_LEN / 2;
        construct[mid] = b'G';
        construct[partner(mid)] = b'T';
        let mature = NucleotideSequence::from_acgt_unchecked(construct[mature_off..mature_off + MATURE_LEN].to_vec());

        let strand = if rng.gen_bool(0.5) { Strand::Plus } else { Strand::Minus };
        let centre = slot_idx * slot + slot / 2;
        let jitter = slot / 4;
        let start = centre - hp_len / 2 + rng.gen_range(0..=jitter) - jitter / 2;
        let (placed, mature_start) = match strand {
            Strand::Plus => (construct, start + mature_off),
            Strand::Minus => (reverse_complement_bytes(&construct), start + hp_len - mature_off - MATURE_LEN),
        };
        chroms[chrom].seq[start..start + hp_len].copy_from_slice(&placed);
        let count = rng.gen_range(p.min_count..=10 * p.min_count);
        *library.entry(mature.clone()).or_insert(0) += count;
        hairpins.push(PlantedHairpin {
            chrom,
            start,
            end: start + hp_len,
            strand,
            mature,
            mature_start,
            five_prime_arm,
        });
    }
    let genome = Genome::new(chroms);

    let known: BTreeSet<NucleotideSequence> = hairpins.iter().map(|h| h.mature.clone()).collect();
    let negatives = if p.n_negatives == 0 {
        Vec::new()
    } else {
        // keep negatives clear of the precursor search windows
        let blocked = AnnotationIndex::from_intervals(
            n_chroms,
            hairpins.iter().map(|h| (h.chrom, h.start.saturating_sub(350), h.end + 350)),
        );
        simulate_negative_set(&genome, &blocked, &known, p.n_negatives, p.seed.wrapping_add(1))?
    };
    for n in &negatives {
        *library.entry(n.clone()).or_insert(0) += rng.gen_range(p.min_count..=10 * p.min_count);
    }
    for _ in 0..p.noise_reads {
        let len = rng.gen_range(18..=26);
        let ci = rng.gen_range(0..n_chroms);
        let s = rng.gen_range(0..=chrom_len - len);
        let slice = &genome.chroms[ci].seq[s..s + len];
        let bases = if rng.gen_bool(0.5) { reverse_complement_bytes(slice) } else { slice.to_vec() };
        let seq = NucleotideSequence::from_acgt_unchecked(bases);
        if known.contains(&seq) {
            continue;
        }
        *library.entry(seq).or_insert(0) += rng.gen_range(1..=20);
    }
    Ok(PlantedGenome {
        genome,
        hairpins,
        negatives,
        library: library.into_iter().collect(),
    })
}
