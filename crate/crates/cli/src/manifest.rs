use std::path::PathBuf;

use mirflow::io::{IngestError, LibraryFormat, LibraryInput};
use mirflow::PipelineConfig;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("at least one library is required")]
    NoLibraries,
    #[error("enrichment requires differential expression (--diff)")]
    EnrichRequiresDiff,
    #[error("differential expression requires a guide file (--guide)")]
    GuideRequired,
    #[error("differential expression requires at least 2 libraries, got {0}")]
    DiffNeedsTwoLibraries(usize),
    #[error("enrichment requires a pathway map (--pathways)")]
    PathwaysRequired,
    #[error("enrichment requires transcripts for target prediction (--transcripts)")]
    TranscriptsRequired,
    #[error("libraries mix input formats ({0} and {1})")]
    MixedFormats(LibraryFormat, LibraryFormat),
}

/// Everything one run needs, resolved from flags and the config file.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub libraries: Vec<LibraryInput>,
    pub genome: PathBuf,
    pub annotations: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub pathways: Option<PathBuf>,
    pub guide: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub diff: bool,
    pub enrich: bool,
    pub out_dir: PathBuf,
}

impl RunManifest {
    pub fn new(config: PipelineConfig, libraries: Vec<LibraryInput>, genome: PathBuf, out_dir: PathBuf) -> Self {
        Self {
            config,
            libraries,
            genome,
            annotations: None,
            transcripts: None,
            pathways: None,
            guide: None,
            index: None,
            diff: false,
            enrich: false,
            out_dir,
        }
    }

    pub fn library_ids(&self) -> Vec<String> {
        self.libraries.iter().map(|l| l.library_id.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let Some(first) = self.libraries.first() else {
            return Err(ManifestError::NoLibraries);
        };
        if let Some(other) = self.libraries.iter().find(|l| l.format != first.format) {
            return Err(ManifestError::MixedFormats(first.format, other.format));
        }
        if self.enrich && !self.diff {
            return Err(ManifestError::EnrichRequiresDiff);
        }
        if self.diff && self.guide.is_none() {
            return Err(ManifestError::GuideRequired);
        }
        if self.diff && self.libraries.len() < 2 {
            return Err(ManifestError::DiffNeedsTwoLibraries(self.libraries.len()));
        }
        if self.enrich && self.pathways.is_none() {
            return Err(ManifestError::PathwaysRequired);
        }
        if self.enrich && self.transcripts.is_none() {
            return Err(ManifestError::TranscriptsRequired);
        }
        Ok(())
    }
}

/// Library inputs from paths, all with `format` when given.
pub fn library_inputs(paths: &[PathBuf], format: Option<LibraryFormat>) -> Result<Vec<LibraryInput>, IngestError> {
    paths.iter().map(|p| LibraryInput::from_path(p, format)).collect()
}
