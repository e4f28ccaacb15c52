use std::collections::HashSet;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{read_text, IngestError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chromosome {
    pub name: String,
    /// Uppercase bases; anything outside `ACGT` is stored as `N`.
    pub seq: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Genome {
    pub chroms: Vec<Chromosome>,
}

impl Genome {
    pub fn new(chroms: Vec<Chromosome>) -> Self {
        Self { chroms }
    }

    pub fn total_len(&self) -> usize {
        self.chroms.iter().map(|c| c.seq.len()).sum()
    }

    pub fn chrom_index(&self, name: &str) -> Option<usize> {
        self.chroms.iter().position(|c| c.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.total_len() == 0
    }

    /// SHA-256 over chromosome names and sequences, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.chroms {
            h.update(c.name.as_bytes());
            h.update([0u8]);
            h.update((c.seq.len() as u64).to_le_bytes());
            h.update(&c.seq);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_fasta(&self) -> String {
        let mut out = String::with_capacity(self.total_len() + self.total_len() / 60 + 64);
        for c in &self.chroms {
            out.push('>');
            out.push_str(&c.name);
            out.push('\n');
            for line in c.seq.chunks(60) {
                out.push_str(std::str::from_utf8(line).expect("ascii"));
                out.push('\n');
            }
        }
        out
    }
}

fn normalize_genomic(b: u8) -> u8 {
    match b {
        b'A' | b'a' => b'A',
        b'C' | b'c' => b'C',
        b'G' | b'g' => b'G',
        b'T' | b't' | b'U' | b'u' => b'T',
        _ => b'N',
    }
}

/// Raw `(id, bases)` records from FASTA text. The id is the header up to the
/// first whitespace.
pub fn parse_fasta_records(text: &str) -> Result<Vec<(String, Vec<u8>)>, IngestError> {
    let mut records: Vec<(String, Vec<u8>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(IngestError::parse(i + 1, "empty fasta header"));
            }
            records.push((id.to_string(), Vec::new()));
        } else {
            let rec = records
                .last_mut()
                .ok_or_else(|| IngestError::parse(i + 1, "sequence before first header"))?;
            rec.1.extend(line.trim().bytes().map(normalize_genomic));
        }
    }
    Ok(records)
}

pub fn parse_genome(text: &str) -> Result<Genome, IngestError> {
    let records = parse_fasta_records(text)?;
    let mut seen = HashSet::new();
    let mut chroms = Vec::with_capacity(records.len());
    for (name, seq) in records {
        if !seen.insert(name.clone()) {
            return Err(IngestError::DuplicateChrom(name));
        }
        chroms.push(Chromosome { name, seq });
    }
    if chroms.is_empty() {
        return Err(IngestError::parse(1, "no fasta records"));
    }
    Ok(Genome { chroms })
}

pub fn load_genome(path: &Path) -> Result<Genome, IngestError> {
    parse_genome(&read_text(path)?)
}

/// Transcript sequences for target search, `(transcript_id, bases)`.
pub fn load_transcripts(path: &Path) -> Result<Vec<(String, Vec<u8>)>, IngestError> {
    parse_fasta_records(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record() {
        let g = parse_genome(">c1\nACGT").unwrap();
        assert_eq!(g.chroms, vec![Chromosome { name: "c1".into(), seq: b"ACGT".to_vec() }]);
    }

    #[test]
    fn two_records_keep_lengths_and_n() {
        let g = parse_genome(">c1 desc\nACGTN\nAC\n>c2\nacgu\n").unwrap();
        assert_eq!(g.chroms.len(), 2);
        assert_eq!(g.chroms[0].seq, b"ACGTNAC");
        assert_eq!(g.chroms[1].seq, b"ACGT");
        assert_eq!(g.total_len(), 11);
        assert_eq!(g.chrom_index("c2"), Some(1));
    }

    #[test]
    fn duplicate_chrom() {
        assert!(matches!(
            parse_genome(">c1\nAC\n>c1\nGT\n"),
            Err(IngestError::DuplicateChrom(n)) if n == "c1"
        ));
    }

    #[test]
    fn fasta_round_trip_and_hash() {
        let g = parse_genome(">a\nACGTACGTAC\n>b\nGGGG\n").unwrap();
        let again = parse_genome(&g.to_fasta()).unwrap();
        assert_eq!(g, again);
        assert_eq!(g.content_hash(), again.content_hash());
        let other = parse_genome(">a\nACGTACGTAC\n>b\nGGGC\n").unwrap();
        assert_ne!(g.content_hash(), other.content_hash());
    }
}
