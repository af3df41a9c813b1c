//! Annotator selection-bias models.
//!
//! Each model turns one fully-labeled image into a probability vector over
//! categories: the chance that an annotator asked to name a single object
//! reports category `i`. Every model assigns zero mass to absent categories.
//!
//! * uniform: equal mass on every positive.
//! * size: mass proportional to the summed box area of the category.
//!   Overlapping boxes are not deduplicated.
//! * location: mass proportional to `1 / (ε + mean center distance)`.
//! * semantic: mass proportional to an empirical spotting frequency.
//!
//! Masses are accumulated in `f64` and normalized once.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, ImageRecord};
use crate::ingest::SpottingPoint;

/// Default location-model ε, in pixels.
pub const DEFAULT_EPSILON: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BiasError {
    #[error("image has no positive labels")]
    NoPositives,
    #[error("positive category {category} has no usable geometry")]
    DegenerateGeometry { category: usize },
    #[error("every positive category has zero spotting frequency")]
    SemanticDegenerate,
    #[error("epsilon must be finite and > 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("frequency vector has length {got}, image has {expected} categories")]
    FrequencyLength { got: usize, expected: usize },
    #[error("unknown bias model {0:?}")]
    UnknownKind(String),
    #[error("unknown semantic fallback {0:?}")]
    UnknownFallback(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasKind {
    Uniform,
    Size,
    Location,
    Semantic,
}

impl BiasKind {
    pub const ALL: [BiasKind; 4] = [BiasKind::Uniform, BiasKind::Size, BiasKind::Location, BiasKind::Semantic];

    pub fn as_str(&self) -> &'static str {
        match self {
            BiasKind::Uniform => "uniform",
            BiasKind::Size => "size",
            BiasKind::Location => "location",
            BiasKind::Semantic => "semantic",
        }
    }
}

impl fmt::Display for BiasKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for BiasKind {
    type Err = BiasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BiasKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| BiasError::UnknownKind(s.to_string()))
    }
}

/// What to do when every positive of an image has zero spotting frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticFallback {
    Error,
    #[default]
    Uniform,
}

impl FromStr for SemanticFallback {
    type Err = BiasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(SemanticFallback::Error),
            "uniform" => Ok(SemanticFallback::Uniform),
            other => Err(BiasError::UnknownFallback(other.to_string())),
        }
    }
}

/// Per-category spotting counts `f_i`, indexed by dense category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpottingFrequencies {
    counts: Vec<u64>,
}

impl SpottingFrequencies {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// A fully parameterized bias model.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasModelSpec {
    Uniform,
    Size,
    Location { epsilon: f64 },
    Semantic { frequencies: SpottingFrequencies, fallback: SemanticFallback },
}

impl BiasModelSpec {
    pub fn location(epsilon: f64) -> Result<Self, BiasError> {
        check_epsilon(epsilon)?;
        Ok(BiasModelSpec::Location { epsilon })
    }

    pub fn semantic(frequencies: SpottingFrequencies, fallback: SemanticFallback) -> Self {
        BiasModelSpec::Semantic { frequencies, fallback }
    }

    pub fn kind(&self) -> BiasKind {
        match self {
            BiasModelSpec::Uniform => BiasKind::Uniform,
            BiasModelSpec::Size => BiasKind::Size,
            BiasModelSpec::Location { .. } => BiasKind::Location,
            BiasModelSpec::Semantic { .. } => BiasKind::Semantic,
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            BiasModelSpec::Location { epsilon } => Some(*epsilon),
            _ => None,
        }
    }

    pub fn distribution(&self, image: &ImageRecord) -> Result<BiasDistribution, BiasError> {
        match self {
            BiasModelSpec::Uniform => uniform_distribution(image),
            BiasModelSpec::Size => size_distribution(image),
            BiasModelSpec::Location { epsilon } => location_distribution(image, *epsilon),
            BiasModelSpec::Semantic { frequencies, fallback } => semantic_distribution(image, frequencies, *fallback),
        }
    }
}

/// `P(i)` for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasDistribution {
    probs: Vec<f64>,
}

impl BiasDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Inverse-CDF lookup in dense category order. `u` must lie in `[0, 1)`.
    /// Never returns a zero-probability category.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
        // Rounding left the cumulative sum just under u.
        last
    }

    /// Normalizes non-negative masses with a positive total.
    fn from_masses(masses: Vec<f64>) -> Self {
        let total: f64 = masses.iter().sum();
        debug_assert!(total > 0.0 && total.is_finite());
        Self { probs: masses.into_iter().map(|m| m / total).collect() }
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), BiasError> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(BiasError::InvalidEpsilon(epsilon))
    }
}

fn require_positive(image: &ImageRecord) -> Result<(), BiasError> {
    if image.labels().iter().any(|&l| l) {
        Ok(())
    } else {
        Err(BiasError::NoPositives)
    }
}

pub fn uniform_distribution(image: &ImageRecord) -> Result<BiasDistribution, BiasError> {
    require_positive(image)?;
    let masses = image.labels().iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    Ok(BiasDistribution::from_masses(masses))
}

pub fn size_distribution(image: &ImageRecord) -> Result<BiasDistribution, BiasError> {
    require_positive(image)?;
    let mut areas = vec![0.0; image.num_labels()];
    for inst in image.instances() {
        areas[inst.category] += inst.bbox.area();
    }
    for (category, (&label, &area)) in image.labels().iter().zip(&areas).enumerate() {
        if label && !(area > 0.0) {
            return Err(BiasError::DegenerateGeometry { category });
        }
    }
    Ok(BiasDistribution::from_masses(areas))
}

/// `D_i = ε + mean_k ‖image center − box center_k‖` over the instances of
/// class `i`; mass is `1 / D_i`, zero for absent classes.
pub fn location_distribution(image: &ImageRecord, epsilon: f64) -> Result<BiasDistribution, BiasError> {
    check_epsilon(epsilon)?;
    require_positive(image)?;
    let (cx, cy) = image.center();
    let l = image.num_labels();
    let mut dist_sum = vec![0.0; l];
    let mut count = vec![0usize; l];
    for inst in image.instances() {
        let (bx, by) = inst.bbox.center();
        dist_sum[inst.category] += (bx - cx).hypot(by - cy);
        count[inst.category] += 1;
    }
    let mut masses = vec![0.0; l];
    for (category, &label) in image.labels().iter().enumerate() {
        if !label {
            continue;
        }
        if count[category] == 0 {
            return Err(BiasError::DegenerateGeometry { category });
        }
        let d = epsilon + dist_sum[category] / count[category] as f64;
        masses[category] = 1.0 / d;
    }
    Ok(BiasDistribution::from_masses(masses))
}

pub fn semantic_distribution(
    image: &ImageRecord,
    freqs: &SpottingFrequencies,
    fallback: SemanticFallback,
) -> Result<BiasDistribution, BiasError> {
    require_positive(image)?;
    if freqs.len() != image.num_labels() {
        return Err(BiasError::FrequencyLength { got: freqs.len(), expected: image.num_labels() });
    }
    let masses: Vec<f64> = image
        .labels()
        .iter()
        .zip(freqs.counts())
        .map(|(&l, &f)| if l { f as f64 } else { 0.0 })
        .collect();
    if masses.iter().all(|&m| m == 0.0) {
        return match fallback {
            SemanticFallback::Uniform => uniform_distribution(image),
            SemanticFallback::Error => Err(BiasError::SemanticDegenerate),
        };
    }
    Ok(BiasDistribution::from_masses(masses))
}

/// Counts, per category, the spotting points that fall inside at least one
/// box of the same category in the same image (edges inclusive). Points on
/// images or categories unknown to `dataset` are discarded.
pub fn spotting_frequencies(dataset: &Dataset, points: &[SpottingPoint]) -> SpottingFrequencies {
    let mut counts = vec![0u64; dataset.num_labels()];
    for p in points {
        let (Some(image), Some(category)) = (dataset.image(p.image_id), dataset.categories().index_of(p.category)) else {
            continue;
        };
        if image.instances_of(category).any(|inst| inst.bbox.contains(p.px, p.py)) {
            counts[category] += 1;
        }
    }
    SpottingFrequencies::new(counts)
}
