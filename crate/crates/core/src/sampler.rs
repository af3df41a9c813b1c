//! Static, seeded SPML label sets.
//!
//! For every training image one positive is drawn from the image's bias
//! distribution; every other label becomes unobserved (it is simply not
//! stored). Each image draws from its own ChaCha8 stream: the key is
//! `ChaCha8Rng::seed_from_u64(seed)` and the stream id is the external image
//! id. One `f64` in `[0, 1)` per image drives an inverse-CDF lookup over the
//! dense category order. The result is reproducible across platforms and
//! independent of the order in which images are visited.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bias::{BiasError, BiasKind, BiasModelSpec};
use crate::dataset::{Dataset, Split};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("realizations are drawn from the train split, got {0}")]
    NotTraining(Split),
    #[error("images without positive labels: {0:?}")]
    NoPositives(Vec<u64>),
    #[error("image {image_id}: {source}")]
    Bias { image_id: u64, source: BiasError },
    #[error("duplicate seed {0}")]
    DuplicateSeed(u64),
}

/// The part of a [`BiasModelSpec`] recorded alongside a realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasDescriptor {
    pub kind: BiasKind,
    pub epsilon: Option<f64>,
}

impl From<&BiasModelSpec> for BiasDescriptor {
    fn from(spec: &BiasModelSpec) -> Self {
        Self { kind: spec.kind(), epsilon: spec.epsilon() }
    }
}

/// One sampled label set: image id → observed dense category.
#[derive(Debug, Clone, PartialEq)]
pub struct SpmlRealization {
    pub bias: BiasDescriptor,
    pub seed: u64,
    pub observations: BTreeMap<u64, usize>,
}

impl SpmlRealization {
    pub fn observed(&self, image_id: u64) -> Option<usize> {
        self.observations.get(&image_id).copied()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Checks that every observation is a ground-truth positive.
    pub fn validate_against(&self, dataset: &Dataset) -> Result<(), String> {
        for (&image_id, &category) in &self.observations {
            let image = dataset.image(image_id).ok_or_else(|| format!("image {image_id} not in dataset"))?;
            if !image.labels().get(category).copied().unwrap_or(false) {
                return Err(format!("image {image_id}: observed category {category} is not a positive"));
            }
        }
        Ok(())
    }
}

/// The per-image random stream.
pub fn image_stream(seed: u64, image_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(image_id);
    rng
}

pub fn sample_realization(dataset: &Dataset, spec: &BiasModelSpec, seed: u64) -> Result<SpmlRealization, SampleError> {
    if dataset.split() != Split::Train {
        return Err(SampleError::NotTraining(dataset.split()));
    }
    let mut empty: Vec<u64> = dataset
        .images()
        .iter()
        .filter(|img| !img.labels().iter().any(|&l| l))
        .map(|img| img.image_id())
        .collect();
    if !empty.is_empty() {
        empty.sort_unstable();
        return Err(SampleError::NoPositives(empty));
    }

    let mut observations = BTreeMap::new();
    for image in dataset.images() {
        let image_id = image.image_id();
        let dist = spec.distribution(image).map_err(|source| SampleError::Bias { image_id, source })?;
        let u: f64 = image_stream(seed, image_id).random();
        observations.insert(image_id, dist.sample_with(u));
    }
    Ok(SpmlRealization { bias: spec.into(), seed, observations })
}

/// Every `(spec, seed)` pair, specs outermost.
pub fn generate_suite(dataset: &Dataset, specs: &[BiasModelSpec], seeds: &[u64]) -> Result<Vec<SpmlRealization>, SampleError> {
    let mut seen = HashSet::new();
    for &s in seeds {
        if !seen.insert(s) {
            return Err(SampleError::DuplicateSeed(s));
        }
    }
    let mut out = Vec::with_capacity(specs.len() * seeds.len());
    for spec in specs {
        for &seed in seeds {
            out.push(sample_realization(dataset, spec, seed)?);
        }
    }
    Ok(out)
}
