//! File formats: parsing inputs into the data model and serializing outputs.
//!
//! | format | reader | writer |
//! |---|---|---|
//! | COCO instances JSON (subset) | [`parse_annotations`] | [`write_annotations`] |
//! | spotting JSON | [`parse_spotting`] | [`write_spotting`] |
//! | SPMLF binary features | [`read_features`] | [`write_features`] |
//! | realization JSON | [`read_realization`] | [`write_realization`] |
//! | frequency JSON | [`read_frequencies`] | [`write_frequencies`] |

mod coco;
mod features;
mod frequencies;
mod realization;
mod spotting;

use std::io;
use std::path::Path;

use thiserror::Error;

use crate::dataset::DatasetError;

pub use coco::{parse_annotations, write_annotations, AnnotationStats, DegenerateAnnotation, ParsedAnnotations};
pub use features::{read_features, write_features, FeatureMatrix, SPMLF_MAGIC};
pub use frequencies::{read_frequencies, write_frequencies};
pub use realization::{read_realization, write_realization};
pub use spotting::{parse_spotting, write_spotting, FlaggedPoint, SpottingPoint};

#[derive(Debug, Error)]
pub enum IngestError {
    /// Malformed JSON or a field of the wrong shape. `path` locates the
    /// offending element (`annotations[3].bbox`).
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl IngestError {
    fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::Parse { path: path.into(), message: message.into() }
    }
}

/// Deserializes `bytes`, reporting failures with the JSON path of the
/// offending element.
pub(crate) fn from_json_bytes<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, IngestError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        IngestError::parse(path, e.into_inner().to_string())
    })
}

/// Writes `bytes` to `path` through a sibling temp file and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
