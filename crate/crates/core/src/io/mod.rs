//! Readers for libraries, genomes and annotation tables, and the writers for
//! every result file.

mod annotation;
mod genome;
mod guide;
mod library;
pub mod output;
mod pathway;

use std::path::PathBuf;

use thiserror::Error;

pub use annotation::{load_annotations, parse_annotations, AnnotationIndex, FeatureAnnotation, FeatureClass};
pub use genome::{load_genome, load_transcripts, parse_fasta_records, parse_genome, Chromosome, Genome};
pub use guide::{parse_guide, parse_guide_file, validate_guide, GuidePair};
pub use library::{
    merge_libraries, parse_library, read_library, Library, LibraryFormat, LibraryInput,
};
pub use pathway::{load_pathways, parse_pathways, PathwayMap};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("library `{0}` has no valid records")]
    EmptyLibrary(String),
    #[error("libraries mix input formats ({0} and {1})")]
    MixedFormats(LibraryFormat, LibraryFormat),
    #[error("cannot infer library format from `{0}`")]
    UnknownFormat(String),
    #[error("guide file: first line must be `Experiment->Control`")]
    BadHeader,
    #[error("guide file: malformed pair at line {0}")]
    BadPairLine(usize),
    #[error("guide file: unknown library `{0}`")]
    UnknownLibrary(String),
    #[error("duplicate chromosome `{0}`")]
    DuplicateChrom(String),
}

impl IngestError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        IngestError::Parse {
            line,
            message: message.into(),
        }
    }
}

pub(crate) fn read_text(path: &std::path::Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
