//! Dataset manifests: one JSON object per line, `{"path": ..., "label": 0|1}`.
//!
//! Relative paths are resolved against the directory holding the manifest,
//! so a generated corpus can be moved as a unit.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ground-truth class. The positive class everywhere in this crate is
/// [`Label::Fake`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn from_digit(d: u8) -> Option<Self> {
        match d {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn as_digit(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    /// SVM encoding: real = −1, fake = +1.
    pub fn as_sign(self) -> f64 {
        match self {
            Label::Real => -1.0,
            Label::Fake => 1.0,
        }
    }

    pub fn from_sign(value: f64) -> Self {
        if value > 0.0 {
            Label::Fake
        } else {
            Label::Real
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_digit())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_digit(v)
            .ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate manifest path {0}")]
    DuplicatePath(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(
        entries: Vec<ManifestEntry>,
        base_dir: impl Into<PathBuf>,
    ) -> Result<Self, ManifestError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.path.as_str()) {
                return Err(ManifestError::DuplicatePath(e.path.clone()));
            }
        }
        Ok(Self {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries
            .iter()
            .filter(|e| e.label == Some(label))
            .count()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let file = fs::File::open(path).map_err(|source| ManifestError::Io {
            path: shown.clone(),
            source,
        })?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| ManifestError::Io {
                path: shown.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry =
                serde_json::from_str(&line).map_err(|e| ManifestError::Parse {
                    path: shown.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            entries.push(entry);
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(entries, base)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let path = path.as_ref();
        let io = |source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
        for e in &self.entries {
            let line = serde_json::to_string(e).expect("manifest entry serializes");
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_labeled_and_unlabeled_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(
            &path,
            "{\"path\":\"a.png\",\"label\":0}\n\n{\"path\":\"/abs/b.png\",\"label\":1}\n{\"path\":\"c.png\"}\n",
        )
        .unwrap();
        let m = DatasetManifest::read(&path).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.entries[0].label, Some(Label::Real));
        assert_eq!(m.entries[2].label, None);
        assert_eq!(m.resolve(&m.entries[0]), dir.path().join("a.png"));
        assert_eq!(m.resolve(&m.entries[1]), PathBuf::from("/abs/b.png"));
    }

    #[test]
    fn rejects_bad_labels_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(&path, "{\"path\":\"a.png\",\"label\":2}\n").unwrap();
        assert!(matches!(
            DatasetManifest::read(&path),
            Err(ManifestError::Parse { line: 1, .. })
        ));
        fs::write(&path, "{\"path\":\"a.png\"}\n{\"path\":\"a.png\"}\n").unwrap();
        assert!(matches!(
            DatasetManifest::read(&path),
            Err(ManifestError::DuplicatePath(_))
        ));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(
            vec![
                ManifestEntry {
                    path: "x.png".into(),
                    label: Some(Label::Fake),
                },
                ManifestEntry {
                    path: "y.png".into(),
                    label: None,
                },
            ],
            dir.path(),
        )
        .unwrap();
        let path = dir.path().join("m.jsonl");
        m.write(&path).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "{\"path\":\"x.png\",\"label\":1}\n{\"path\":\"y.png\"}\n"
        );
        assert_eq!(DatasetManifest::read(&path).unwrap(), m);
    }
}
