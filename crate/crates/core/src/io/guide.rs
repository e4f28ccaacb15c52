use std::path::Path;

use super::{read_text, IngestError};

pub const GUIDE_HEADER: &str = "Experiment->Control";

/// One experiment-versus-control comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GuidePair {
    pub experiment: String,
    pub control: String,
}

impl GuidePair {
    pub fn new(experiment: impl Into<String>, control: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
            control: control.into(),
        }
    }

    /// `EXPT->CTRL`, as written in the guide file.
    pub fn label(&self) -> String {
        format!("{}->{}", self.experiment, self.control)
    }
}

/// Parses a guide file body: the literal `Experiment->Control` header
/// followed by one `EXPT->CTRL` line per comparison.
pub fn parse_guide(text: &str) -> Result<Vec<GuidePair>, IngestError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == GUIDE_HEADER => {}
        _ => return Err(IngestError::BadHeader),
    }
    let mut pairs = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (expt, ctrl) = line.split_once("->").ok_or(IngestError::BadPairLine(i + 1))?;
        let (expt, ctrl) = (expt.trim(), ctrl.trim());
        if expt.is_empty() || ctrl.is_empty() || ctrl.contains("->") || expt == ctrl {
            return Err(IngestError::BadPairLine(i + 1));
        }
        pairs.push(GuidePair::new(expt, ctrl));
    }
    Ok(pairs)
}

/// Checks that every id named in the guide is one of `libraries`.
pub fn validate_guide(pairs: &[GuidePair], libraries: &[String]) -> Result<(), IngestError> {
    for p in pairs {
        for id in [&p.experiment, &p.control] {
            if !libraries.iter().any(|l| l == id) {
                return Err(IngestError::UnknownLibrary(id.clone()));
            }
        }
    }
    Ok(())
}

pub fn parse_guide_file(path: &Path, libraries: &[String]) -> Result<Vec<GuidePair>, IngestError> {
    let pairs = parse_guide(&read_text(path)?)?;
    validate_guide(&pairs, libraries)?;
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verbatim_example() {
        let pairs = parse_guide("Experiment->Control\nLib2->Lib1").unwrap();
        assert_eq!(pairs, vec![GuidePair::new("Lib2", "Lib1")]);
    }

    #[test]
    fn header_only() {
        assert!(parse_guide("Experiment->Control\n").unwrap().is_empty());
    }

    #[test]
    fn malformed() {
        assert!(matches!(
            parse_guide("Experiment->Control\nLib2-Lib1"),
            Err(IngestError::BadPairLine(2))
        ));
        assert!(matches!(parse_guide("Lib2->Lib1\n"), Err(IngestError::BadHeader)));
        assert!(matches!(parse_guide(""), Err(IngestError::BadHeader)));
        assert!(matches!(
            parse_guide("Experiment->Control\nLib1->Lib1"),
            Err(IngestError::BadPairLine(2))
        ));
        assert!(matches!(
            parse_guide("Experiment->Control\n->Lib1"),
            Err(IngestError::BadPairLine(2))
        ));
    }

    #[test]
    fn unknown_library() {
        let pairs = parse_guide("Experiment->Control\nLib2->Lib1").unwrap();
        let libs = vec!["Lib1".to_string()];
        assert!(matches!(
            validate_guide(&pairs, &libs),
            Err(IngestError::UnknownLibrary(id)) if id == "Lib2"
        ));
    }
}
