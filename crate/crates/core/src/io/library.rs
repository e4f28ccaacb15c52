use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use super::{read_text, IngestError};
use crate::model::{NucleotideSequence, SmallRnaRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LibraryFormat {
    /// `SEQ\tCOUNT` per line.
    TsvReadcount,
    /// One raw sequence per line.
    Reads,
    Fasta,
    Fastq,
}

impl LibraryFormat {
    pub fn from_extension(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "tsv" => Some(Self::TsvReadcount),
            "txt" | "reads" => Some(Self::Reads),
            "fa" | "fasta" | "fna" => Some(Self::Fasta),
            "fq" | "fastq" => Some(Self::Fastq),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TsvReadcount => "tsv",
            Self::Reads => "reads",
            Self::Fasta => "fasta",
            Self::Fastq => "fastq",
        }
    }
}

impl fmt::Display for LibraryFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LibraryFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tsv" | "readcount" => Ok(Self::TsvReadcount),
            "reads" => Ok(Self::Reads),
            "fasta" => Ok(Self::Fasta),
            "fastq" => Ok(Self::Fastq),
            other => Err(format!("unknown library format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibraryInput {
    pub library_id: String,
    pub format: LibraryFormat,
    pub path: PathBuf,
}

impl LibraryInput {
    /// Library id is the file stem; the format comes from `format` or, if
    /// absent, the file extension.
    pub fn from_path(path: &Path, format: Option<LibraryFormat>) -> Result<Self, IngestError> {
        let format = match format {
            Some(f) => f,
            None => LibraryFormat::from_extension(path)
                .ok_or_else(|| IngestError::UnknownFormat(path.display().to_string()))?,
        };
        let library_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("library")
            .to_string();
        Ok(Self {
            library_id,
            format,
            path: path.to_path_buf(),
        })
    }
}

/// A collapsed library: unique sequences with their counts, sorted by sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Library {
    pub id: String,
    pub reads: Vec<(NucleotideSequence, u64)>,
    /// Total reads seen, including ones dropped for non-ACGT content.
    pub raw_reads: u64,
    pub dropped_reads: u64,
}

impl Library {
    pub fn total(&self) -> u64 {
        self.reads.iter().map(|(_, c)| c).sum()
    }
}

pub fn read_library(input: &LibraryInput) -> Result<Library, IngestError> {
    let text = read_text(&input.path)?;
    parse_library(&text, input.format, &input.library_id)
}

/// Collapses identical sequences. Reads containing bases outside
/// `ACGTU` (e.g. `N`) are skipped and counted in `dropped_reads`.
pub fn parse_library(text: &str, format: LibraryFormat, id: &str) -> Result<Library, IngestError> {
    let mut counts: BTreeMap<NucleotideSequence, u64> = BTreeMap::new();
    let mut raw = 0u64;
    let mut dropped = 0u64;
    let mut add = |seq: &str, n: u64| {
        raw += n;
        match NucleotideSequence::normalize(seq) {
            Ok(s) => *counts.entry(s).or_insert(0) += n,
            Err(_) => dropped += n,
        }
    };

    match format {
        LibraryFormat::Reads => {
            for line in text.lines() {
                let line = line.trim();
                if !line.is_empty() {
                    add(line, 1);
                }
            }
        }
        LibraryFormat::TsvReadcount => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let (seq, count) = line
                    .split_once('\t')
                    .ok_or_else(|| IngestError::parse(i + 1, "expected SEQ<TAB>COUNT"))?;
                let count: u64 = count
                    .trim()
                    .parse()
                    .map_err(|_| IngestError::parse(i + 1, "count is not a non-negative integer"))?;
                add(seq.trim(), count);
            }
        }
        LibraryFormat::Fasta => {
            let mut current: Option<String> = None;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                if line.starts_with('>') {
                    if let Some(seq) = current.take() {
                        add(&seq, 1);
                    }
                    current = Some(String::new());
                } else {
                    match current.as_mut() {
                        Some(seq) => seq.push_str(line),
                        None => return Err(IngestError::parse(i + 1, "sequence before first header")),
                    }
                }
            }
            if let Some(seq) = current {
                add(&seq, 1);
            }
        }
        LibraryFormat::Fastq => {
            let lines: Vec<(usize, &str)> = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .collect();
            if lines.len() % 4 != 0 {
                let line = lines.last().map(|(i, _)| i + 1).unwrap_or(1);
                return Err(IngestError::parse(line, "truncated fastq record"));
            }
            for rec in lines.chunks(4) {
                let (hl, header) = rec[0];
                let (_, seq) = rec[1];
                let (pl, plus) = rec[2];
                let (ql, qual) = rec[3];
                if !header.starts_with('@') {
                    return Err(IngestError::parse(hl + 1, "expected `@` header"));
                }
                if !plus.starts_with('+') {
                    return Err(IngestError::parse(pl + 1, "expected `+` separator"));
                }
                if qual.trim().len() != seq.trim().len() {
                    return Err(IngestError::parse(ql + 1, "quality length differs from sequence"));
                }
                add(seq.trim(), 1);
            }
        }
    }

    let reads: Vec<_> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
    if reads.is_empty() {
        return Err(IngestError::EmptyLibrary(id.to_string()));
    }
    Ok(Library {
        id: id.to_string(),
        reads,
        raw_reads: raw,
        dropped_reads: dropped,
    })
}

/// Joins libraries into unique records carrying one count per library, in
/// sequence order.
pub fn merge_libraries(libraries: &[Library]) -> Vec<SmallRnaRecord> {
    let n = libraries.len();
    let mut merged: BTreeMap<&NucleotideSequence, Vec<u64>> = BTreeMap::new();
    for (li, lib) in libraries.iter().enumerate() {
        for (seq, c) in &lib.reads {
            merged.entry(seq).or_insert_with(|| vec![0; n])[li] += c;
        }
    }
    merged
        .into_iter()
        .map(|(seq, counts)| SmallRnaRecord::new(seq.clone(), counts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn collapsed(lib: &Library) -> Vec<(&str, u64)> {
        lib.reads.iter().map(|(s, c)| (s.as_str(), *c)).collect()
    }

    #[test]
    fn reads_format_collapses() {
        let lib = parse_library("ATGCA\nATGCA\nGGGTT\n", LibraryFormat::Reads, "l").unwrap();
        assert_eq!(collapsed(&lib), vec![("ATGCA", 2), ("GGGTT", 1)]);
        assert_eq!(lib.raw_reads, 3);
    }

    #[test]
    fn tsv_counts() {
        let lib = parse_library("ATGCA\t7\n", LibraryFormat::TsvReadcount, "l").unwrap();
        assert_eq!(collapsed(&lib), vec![("ATGCA", 7)]);
        let err = parse_library("ATGCA 7\n", LibraryFormat::TsvReadcount, "l").unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 1, .. }));
        let err = parse_library("ATGCA\t7\nAT\t-1\n", LibraryFormat::TsvReadcount, "l").unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 2, .. }));
    }

    #[test]
    fn fastq_qualities_ignored() {
        let text = "@r1\nACGTACGT\n+\nIIIIIIII\n@r2\nACGTACGT\n+r2\n!!!!!!!!\n";
        let lib = parse_library(text, LibraryFormat::Fastq, "l").unwrap();
        assert_eq!(collapsed(&lib), vec![("ACGTACGT", 2)]);
        let bad = "@r1\nACGT\n-\nIIII\n";
        assert!(matches!(
            parse_library(bad, LibraryFormat::Fastq, "l").unwrap_err(),
            IngestError::Parse { line: 3, .. }
        ));
        assert!(parse_library("@r1\nACGT\n+\n", LibraryFormat::Fastq, "l").is_err());
    }

    #[test]
    fn fasta_multiline_and_rna() {
        let text = ">a\nACGU\nACGU\n>b\nacgtacgt\n>c\nNNNN\n";
        let lib = parse_library(text, LibraryFormat::Fasta, "l").unwrap();
        assert_eq!(collapsed(&lib), vec![("ACGTACGT", 2)]);
        assert_eq!(lib.dropped_reads, 1);
        assert!(parse_library("ACGT\n>a\nACGT\n", LibraryFormat::Fasta, "l").is_err());
    }

    #[test]
    fn empty_library_rejected() {
        assert!(matches!(
            parse_library("NNNN\n\n", LibraryFormat::Reads, "x").unwrap_err(),
            IngestError::EmptyLibrary(id) if id == "x"
        ));
    }

    #[test]
    fn merge_aligns_counts_per_library() {
        let a = parse_library("AAAA\t3\nCCCC\t1\n", LibraryFormat::TsvReadcount, "a").unwrap();
        let b = parse_library("CCCC\t5\nGGGG\t2\n", LibraryFormat::TsvReadcount, "b").unwrap();
        let recs = merge_libraries(&[a, b]);
        let got: Vec<_> = recs.iter().map(|r| (r.sequence.as_str(), r.counts.clone())).collect();
        assert_eq!(
            got,
            vec![("AAAA", vec![3, 0]), ("CCCC", vec![1, 5]), ("GGGG", vec![0, 2])]
        );
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(LibraryFormat::from_extension(Path::new("x/lib1.fq")), Some(LibraryFormat::Fastq));
        let input = LibraryInput::from_path(Path::new("data/Lib2.tsv"), None).unwrap();
        assert_eq!(input.library_id, "Lib2");
        assert_eq!(input.format, LibraryFormat::TsvReadcount);
    }

    proptest! {
        #[test]
        fn collapse_is_order_independent(mut reads in proptest::collection::vec("[ACGT]{3,8}", 1..60), seed in any::<u64>()) {
            let text: String = reads.iter().map(|r| format!("{r}\n")).collect();
            let a = parse_library(&text, LibraryFormat::Reads, "l").unwrap();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..reads.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                reads.swap(i, (s >> 33) as usize % (i + 1));
            }
            let text2: String = reads.iter().map(|r| format!("{r}\n")).collect();
            let b = parse_library(&text2, LibraryFormat::Reads, "l").unwrap();
            prop_assert_eq!(&a.reads, &b.reads);
            prop_assert_eq!(a.total(), reads.len() as u64);
        }
    }
}
