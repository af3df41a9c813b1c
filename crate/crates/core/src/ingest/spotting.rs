use serde::{Deserialize, Serialize};

use super::{from_json_bytes, IngestError};
use crate::dataset::Dataset;

/// One object-spotting click: an annotator pointed at `(px, py)` and named
/// the external category `category`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpottingPoint {
    pub image_id: u64,
    #[serde(rename = "pixel_x")]
    pub px: f64,
    #[serde(rename = "pixel_y")]
    pub py: f64,
    #[serde(rename = "category_id")]
    pub category: u64,
}

/// A parsed point plus what the dataset knows about it. Flagged points are
/// kept; frequency counting discards them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlaggedPoint {
    pub point: SpottingPoint,
    pub unknown_image: bool,
    pub unknown_category: bool,
}

impl FlaggedPoint {
    pub fn is_flagged(&self) -> bool {
        self.unknown_image || self.unknown_category
    }
}

/// Parses a JSON array of `{image_id, pixel_x, pixel_y, category_id}`
/// records, flagging (not dropping) points that reference images or
/// categories absent from `dataset`.
pub fn parse_spotting(bytes: &[u8], dataset: &Dataset) -> Result<Vec<FlaggedPoint>, IngestError> {
    let points: Vec<SpottingPoint> = from_json_bytes(bytes)?;
    let mut out = Vec::with_capacity(points.len());
    for (k, p) in points.into_iter().enumerate() {
        if !(p.px.is_finite() && p.py.is_finite() && p.px >= 0.0 && p.py >= 0.0) {
            return Err(IngestError::parse(
                format!("[{k}]"),
                format!("pixel coordinates must be finite and non-negative, got ({}, {})", p.px, p.py),
            ));
        }
        out.push(FlaggedPoint {
            point: p,
            unknown_image: dataset.image(p.image_id).is_none(),
            unknown_category: dataset.categories().index_of(p.category).is_none(),
        });
    }
    let flagged = out.iter().filter(|p| p.is_flagged()).count();
    if flagged > 0 {
        log::warn!("{flagged} spotting points reference images or categories outside the dataset");
    }
    Ok(out)
}

pub fn write_spotting(points: &[SpottingPoint]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(points).expect("spotting points serialize");
    out.push(b'\n');
    out
}
