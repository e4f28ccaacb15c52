//! Suffix-array genome index with exact, full-length, both-strand lookup.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::io::Genome;
use crate::model::{reverse_complement_bytes, Locus, SmallRnaRecord, Strand};

/// Separates chromosomes in the concatenated text. Queries are pure ACGT,
/// so no match can cross it (or an `N`).
const SENTINEL: u8 = b'#';
const MAGIC: &[u8; 8] = b"MIRFIDX1";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("index cache i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("index cache is malformed: {0}")]
    Malformed(&'static str),
    #[error("index cache was built for a different genome")]
    GenomeMismatch,
}

/// Forward text of every chromosome joined by sentinels, its suffix array
/// and chromosome offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenomeIndex {
    text: Vec<u8>,
    suffix_array: Vec<u32>,
    chrom_starts: Vec<usize>,
    chrom_lens: Vec<usize>,
    genome_hash: String,
}

/// Builds the index by prefix doubling: suffixes are ranked by their first
/// `k` characters, then re-sorted on `(rank[i], rank[i + k])` until all
/// ranks are distinct.
pub fn build_index(genome: &Genome) -> GenomeIndex {
    let mut text = Vec::with_capacity(genome.total_len() + genome.chroms.len());
    let mut chrom_starts = Vec::with_capacity(genome.chroms.len());
    let mut chrom_lens = Vec::with_capacity(genome.chroms.len());
    for (i, c) in genome.chroms.iter().enumerate() {
        if i > 0 {
            text.push(SENTINEL);
        }
        chrom_starts.push(text.len());
        chrom_lens.push(c.seq.len());
        text.extend_from_slice(&c.seq);
    }
    assert!(text.len() < u32::MAX as usize, "genome too large for a 32-bit suffix array");
    let suffix_array = suffix_array(&text);
    GenomeIndex {
        text,
        suffix_array,
        chrom_starts,
        chrom_lens,
        genome_hash: genome.content_hash(),
    }
}

fn suffix_array(text: &[u8]) -> Vec<u32> {
    let n = text.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sa: Vec<u32> = (0..n as u32).collect();
    let mut rank: Vec<u32> = text.iter().map(|&b| u32::from(b)).collect();
    let mut keys = vec![0u64; n];
    let mut k = 1usize;
    loop {
        for i in 0..n {
            let second = if i + k < n { u64::from(rank[i + k]) + 1 } else { 0 };
            keys[i] = (u64::from(rank[i]) << 32) | second;
        }
        sa.sort_unstable_by_key(|&i| keys[i as usize]);
        let mut next = vec![0u32; n];
        for w in 1..n {
            let (prev, cur) = (sa[w - 1] as usize, sa[w] as usize);
            next[cur] = next[prev] + u32::from(keys[cur] != keys[prev]);
        }
        rank = next;
        if rank[sa[n - 1] as usize] as usize == n - 1 || k >= n {
            break;
        }
        k *= 2;
    }
    sa
}

impl GenomeIndex {
    pub fn text(&self) -> &[u8] {
        &self.text
    }

    pub fn suffix_array(&self) -> &[u32] {
        &self.suffix_array
    }

    pub fn genome_hash(&self) -> &str {
        &self.genome_hash
    }

    pub fn num_chroms(&self) -> usize {
        self.chrom_starts.len()
    }

    pub fn chrom_len(&self, chrom: usize) -> usize {
        self.chrom_lens[chrom]
    }

    /// Forward-strand bases of `chrom[start..end]`.
    pub fn slice(&self, chrom: usize, start: usize, end: usize) -> &[u8] {
        let base = self.chrom_starts[chrom];
        &self.text[base + start..base + end]
    }

    fn prefix_at(&self, pos: usize, m: usize) -> &[u8] {
        &self.text[pos..(pos + m).min(self.text.len())]
    }

    /// Text positions where `pattern` occurs, in suffix-array order.
    fn find(&self, pattern: &[u8]) -> &[u32] {
        let m = pattern.len();
        let lo = self
            .suffix_array
            .partition_point(|&p| self.prefix_at(p as usize, m) < pattern);
        let hi = self
            .suffix_array
            .partition_point(|&p| self.prefix_at(p as usize, m) <= pattern);
        &self.suffix_array[lo..hi]
    }

    fn to_locus(&self, pos: usize, strand: Strand) -> Locus {
        let chrom = self.chrom_starts.partition_point(|&s| s <= pos) - 1;
        Locus {
            chrom,
            start: pos - self.chrom_starts[chrom],
            strand,
        }
    }

    /// Every exact full-length occurrence of `query` on either strand,
    /// ordered by `(chrom, start, strand)`. A minus-strand hit's `start` is
    /// the forward-strand position of the reverse complement.
    pub fn locate_exact(&self, query: &[u8]) -> Vec<Locus> {
        if query.is_empty() {
            return Vec::new();
        }
        let rc = reverse_complement_bytes(query);
        let mut hits: Vec<Locus> = self
            .find(query)
            .iter()
            .map(|&p| self.to_locus(p as usize, Strand::Plus))
            .chain(self.find(&rc).iter().map(|&p| self.to_locus(p as usize, Strand::Minus)))
            .collect();
        hits.sort_unstable();
        hits
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), IndexError> {
        w.write_all(MAGIC)?;
        w.write_all(self.genome_hash.as_bytes())?;
        w.write_all(&(self.chrom_starts.len() as u64).to_le_bytes())?;
        for (s, l) in self.chrom_starts.iter().zip(&self.chrom_lens) {
            w.write_all(&(*s as u64).to_le_bytes())?;
            w.write_all(&(*l as u64).to_le_bytes())?;
        }
        w.write_all(&(self.text.len() as u64).to_le_bytes())?;
        w.write_all(&self.text)?;
        for p in &self.suffix_array {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, IndexError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(IndexError::Malformed("bad magic"));
        }
        let mut hash = [0u8; 64];
        r.read_exact(&mut hash)?;
        let genome_hash = String::from_utf8(hash.to_vec()).map_err(|_| IndexError::Malformed("hash"))?;
        let mut u64_buf = [0u8; 8];
        let mut read_u64 = |r: &mut dyn Read| -> Result<usize, IndexError> {
            r.read_exact(&mut u64_buf)?;
            Ok(u64::from_le_bytes(u64_buf) as usize)
        };
        let n_chroms = read_u64(&mut r)?;
        let mut chrom_starts = Vec::with_capacity(n_chroms);
        let mut chrom_lens = Vec::with_capacity(n_chroms);
        for _ in 0..n_chroms {
            chrom_starts.push(read_u64(&mut r)?);
            chrom_lens.push(read_u64(&mut r)?);
        }
        let n = read_u64(&mut r)?;
        let mut text = vec![0u8; n];
        r.read_exact(&mut text)?;
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let suffix_array = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            text,
            suffix_array,
            chrom_starts,
            chrom_lens,
            genome_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Loads a cached index, refusing one built from a different genome.
    pub fn load_for(path: &Path, genome: &Genome) -> Result<Self, IndexError> {
        let f = std::fs::File::open(path)?;
        let idx = Self::read_from(std::io::BufReader::new(f))?;
        if idx.genome_hash != genome.content_hash() {
            return Err(IndexError::GenomeMismatch);
        }
        Ok(idx)
    }
}

/// Keeps records placed at between 1 and `max_loci` loci.
pub fn passes_locus_count(r: &SmallRnaRecord, max_loci: usize) -> bool {
    (1..=max_loci).contains(&r.loci.len())
}

pub fn locus_count_filter(records: Vec<SmallRnaRecord>, max_loci: usize) -> Vec<SmallRnaRecord> {
    records
        .into_iter()
        .filter(|r| passes_locus_count(r, max_loci))
        .collect()
}

/// Both-strand O(n*m) scan, the reference for [`GenomeIndex::locate_exact`].
#[doc(hidden)]
pub fn locate_naive(genome: &Genome, query: &[u8]) -> Vec<Locus> {
    let rc = reverse_complement_bytes(query);
    let m = query.len();
    let mut hits = Vec::new();
    for (ci, c) in genome.chroms.iter().enumerate() {
        if c.seq.len() < m {
            continue;
        }
        for start in 0..=c.seq.len() - m {
            let w = &c.seq[start..start + m];
            if w == query {
                hits.push(Locus { chrom: ci, start, strand: Strand::Plus });
            }
            if w == rc.as_slice() {
                hits.push(Locus { chrom: ci, start, strand: Strand::Minus });
            }
        }
    }
    hits.sort_unstable();
    hits
}
