//! Deterministic synthetic corpora for desk-scale end-to-end runs.
//!
//! Images carry 1..k objects with category-dependent box size (scaled by
//! `size_skew`) and category-dependent distance from the image center.
//! Features are `M·y + σ·noise` for a fixed Gaussian projection `M`, so a
//! linear classifier can recover the labels. Spotting points are placed
//! inside boxes of their own category (counted) plus distractors on images
//! that lack the category (filtered out).
//!
//! Each output draws from its own ChaCha8 stream of `seed`, so e.g. changing
//! `n_test` leaves the training split untouched.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bias::SpottingFrequencies;
use crate::dataset::{BoundingBox, CategorySet, Dataset, ImageRecord, Instance, Split};
use crate::ingest::{self, DegenerateAnnotation, FeatureMatrix, IngestError, SpottingPoint};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub num_labels: usize,
    pub dim: usize,
    /// Inclusive range of objects per image.
    pub objects_per_image: [usize; 2],
    /// Per-category multiplier of the mean box side. Empty means all 1.
    pub size_skew: Vec<f64>,
    /// Per-category number of in-box spotting points. Empty means 100 each.
    pub spotting_freqs: Vec<u64>,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Probability that an image gains an extra positive whose only box has
    /// zero width (dropped at ingest).
    pub zero_area_rate: f64,
    /// Probability that an object is centered exactly on the image center.
    pub centered_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 500,
            num_labels: 10,
            dim: 64,
            objects_per_image: [1, 4],
            size_skew: Vec::new(),
            spotting_freqs: Vec::new(),
            noise_sigma: 0.5,
            seed: 0,
            zero_area_rate: 0.0,
            centered_rate: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn skew(&self) -> Vec<f64> {
        if self.size_skew.is_empty() {
            vec![1.0; self.num_labels]
        } else {
            self.size_skew.clone()
        }
    }

    pub fn freqs(&self) -> Vec<u64> {
        if self.spotting_freqs.is_empty() {
            vec![100; self.num_labels]
        } else {
            self.spotting_freqs.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.n_train == 0 || self.n_test == 0 || self.num_labels == 0 || self.dim == 0 {
            return fail("n_train, n_test, num_labels and dim must be positive");
        }
        if self.dim < self.num_labels {
            return fail("dim must be >= num_labels");
        }
        let [lo, hi] = self.objects_per_image;
        if lo == 0 || lo > hi {
            return fail("objects_per_image must be [min, max] with 1 <= min <= max");
        }
        if self.skew().len() != self.num_labels || self.skew().iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return fail("size_skew must have num_labels positive entries");
        }
        if self.freqs().len() != self.num_labels {
            return fail("spotting_freqs must have num_labels entries");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise_sigma must be >= 0");
        }
        for rate in [self.zero_area_rate, self.centered_rate] {
            if !(0.0..=1.0).contains(&rate) {
                return fail("rates must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Dataset,
    pub test: Dataset,
    pub train_features: FeatureMatrix,
    pub test_features: FeatureMatrix,
    /// Expected spotting counts: what the spotting filter yields on
    /// `spotting` over `train`.
    pub frequencies: SpottingFrequencies,
    pub spotting: Vec<SpottingPoint>,
    /// Zero-width boxes that make up the zero-area positives.
    pub degenerate: Vec<DegenerateAnnotation>,
}

pub const TRAIN_ANNOTATIONS: &str = "train_annotations.json";
pub const TEST_ANNOTATIONS: &str = "test_annotations.json";
pub const TRAIN_FEATURES: &str = "train_features.spmlf";
pub const TEST_FEATURES: &str = "test_features.spmlf";
pub const SPOTTING: &str = "spotting.json";
pub const FREQUENCIES: &str = "frequencies.json";

impl SynthCorpus {
    /// Writes every artifact in its on-disk format under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        let split_degenerate = |ds: &Dataset| -> Vec<DegenerateAnnotation> {
            self.degenerate.iter().filter(|d| ds.image(d.image_id).is_some()).copied().collect()
        };
        ingest::write_atomic(&dir.join(TRAIN_ANNOTATIONS), &ingest::write_annotations(&self.train, &split_degenerate(&self.train)))?;
        ingest::write_atomic(&dir.join(TEST_ANNOTATIONS), &ingest::write_annotations(&self.test, &split_degenerate(&self.test)))?;
        for (name, m) in [(TRAIN_FEATURES, &self.train_features), (TEST_FEATURES, &self.test_features)] {
            let mut buf = Vec::new();
            ingest::write_features(m, &mut buf)?;
            ingest::write_atomic(&dir.join(name), &buf)?;
        }
        ingest::write_atomic(&dir.join(SPOTTING), &ingest::write_spotting(&self.spotting))?;
        ingest::write_atomic(&dir.join(FREQUENCIES), &ingest::write_frequencies(&self.frequencies, self.train.categories()))?;
        Ok(())
    }
}

const STREAM_PROJECTION: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_SPOTTING: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

struct SplitOutput {
    images: Vec<ImageRecord>,
    features: Vec<f32>,
    degenerate: Vec<DegenerateAnnotation>,
}

fn generate_split(
    cfg: &SynthConfig,
    projection: &[f64],
    first_id: u64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SplitOutput, SynthError> {
    let l = cfg.num_labels;
    let d = cfg.dim;
    let skew = cfg.skew();
    let mut images = Vec::with_capacity(count);
    let mut features = Vec::with_capacity(count * d);
    let mut degenerate = Vec::new();

    for n in 0..count {
        let image_id = first_id + n as u64;
        let width: u32 = rng.random_range(320..=640);
        let height: u32 = rng.random_range(240..=480);
        let (cx, cy) = (f64::from(width) / 2.0, f64::from(height) / 2.0);
        let short = f64::from(width.min(height));
        let k = rng.random_range(cfg.objects_per_image[0]..=cfg.objects_per_image[1]);

        let mut instances = Vec::with_capacity(k);
        for _ in 0..k {
            let c = rng.random_range(0..l);
            let side = short * rng.random_range(0.05..0.25) * skew[c];
            // Even integer sides keep centered boxes exactly centered.
            let even = |v: f64, max: u32| -> f64 { ((v / 2.0).round() * 2.0).clamp(2.0, f64::from(max - max % 2)) };
            let bw = even(side * rng.random_range(0.7..1.3), width);
            let bh = even(side * rng.random_range(0.7..1.3), height);
            let (x, y) = if rng.random::<f64>() < cfg.centered_rate {
                (cx - bw / 2.0, cy - bh / 2.0)
            } else {
                let radius = (c as f64 + 0.5) / l as f64 * 0.4 * short * rng.random_range(0.6..1.4);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let x = (cx + radius * angle.cos() - bw / 2.0).round().clamp(0.0, f64::from(width) - bw);
                let y = (cy + radius * angle.sin() - bh / 2.0).round().clamp(0.0, f64::from(height) - bh);
                (x, y)
            };
            let bbox = BoundingBox::new(x, y, bw, bh).map_err(|e| SynthError::Config(e.to_string()))?;
            instances.push(Instance { category: c, bbox });
        }

        let mut extra = Vec::new();
        if rng.random::<f64>() < cfg.zero_area_rate {
            let absent: Vec<usize> = (0..l).filter(|c| instances.iter().all(|i| i.category != *c)).collect();
            if !absent.is_empty() {
                let c = absent[rng.random_range(0..absent.len())];
                extra.push(c);
                degenerate.push(DegenerateAnnotation {
                    image_id,
                    category_id: c as u64 + 1,
                    bbox: [f64::from(width / 4), f64::from(height / 4), 0.0, 10.0],
                });
            }
        }

        // Same canonical instance order as the ingest path.
        instances.sort_by(|a, b| {
            a.category.cmp(&b.category).then_with(|| {
                [a.bbox.x(), a.bbox.y(), a.bbox.w(), a.bbox.h()]
                    .iter()
                    .zip([b.bbox.x(), b.bbox.y(), b.bbox.w(), b.bbox.h()].iter())
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let image = ImageRecord::from_instances(image_id, width, height, l, instances, &extra)
            .map_err(|e| SynthError::Config(e.to_string()))?;

        for j in 0..d {
            let signal: f64 = (0..l).filter(|&c| image.labels()[c]).map(|c| projection[j * l + c]).sum();
            features.push((signal + cfg.noise_sigma * normal(rng)) as f32);
        }
        images.push(image);
    }
    Ok(SplitOutput { images, features, degenerate })
}

fn generate_spotting(cfg: &SynthConfig, train: &Dataset, rng: &mut ChaCha8Rng) -> (Vec<SpottingPoint>, Vec<u64>) {
    let l = cfg.num_labels;
    let mut points = Vec::new();
    let mut expected = vec![0u64; l];
    for (c, &target) in cfg.freqs().iter().enumerate() {
        let external = train.categories().external(c);
        let holders: Vec<(u64, BoundingBox)> = train
            .images()
            .iter()
            .flat_map(|img| img.instances_of(c).map(move |i| (img.image_id(), i.bbox)))
            .collect();
        if holders.is_empty() {
            continue;
        }
        expected[c] = target;
        for _ in 0..target {
            let (image_id, b) = holders[rng.random_range(0..holders.len())];
            let px = b.x() + rng.random_range(0.0..=1.0) * b.w();
            let py = b.y() + rng.random_range(0.0..=1.0) * b.h();
            points.push(SpottingPoint { image_id, px, py, category: external });
        }
        // Distractors land on images without category c and are filtered out.
        let lacking: Vec<&ImageRecord> = train.images().iter().filter(|img| !img.labels()[c]).collect();
        if !lacking.is_empty() {
            for _ in 0..target / 4 {
                let img = lacking[rng.random_range(0..lacking.len())];
                let px = rng.random_range(0.0..f64::from(img.width()));
                let py = rng.random_range(0.0..f64::from(img.height()));
                points.push(SpottingPoint { image_id: img.image_id(), px, py, category: external });
            }
        }
    }
    (points, expected)
}

/// Builds a corpus; category `c` gets external id `c + 1`, train images ids
/// `1..=n_train`, test images the following `n_test` ids.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let l = cfg.num_labels;
    let d = cfg.dim;

    let mut rng = stream(cfg.seed, STREAM_PROJECTION);
    let projection: Vec<f64> = (0..d * l).map(|_| normal(&mut rng)).collect();

    let categories = CategorySet::new(
        (1..=l as u64).collect(),
        (0..l).map(|c| Some(format!("category_{c}"))).collect(),
    )
    .map_err(|e| SynthError::Config(e.to_string()))?;

    let train_out = generate_split(cfg, &projection, 1, cfg.n_train, &mut stream(cfg.seed, STREAM_TRAIN))?;
    let test_out =
        generate_split(cfg, &projection, 1 + cfg.n_train as u64, cfg.n_test, &mut stream(cfg.seed, STREAM_TEST))?;

    let ids = |imgs: &[ImageRecord]| imgs.iter().map(|i| i.image_id()).collect::<Vec<_>>();
    let train_features = FeatureMatrix::new(ids(&train_out.images), d, train_out.features)?;
    let test_features = FeatureMatrix::new(ids(&test_out.images), d, test_out.features)?;
    let train = Dataset::new(categories.clone(), train_out.images, Split::Train).map_err(IngestError::from)?;
    let test = Dataset::new(categories, test_out.images, Split::Test).map_err(IngestError::from)?;

    let (spotting, expected) = generate_spotting(cfg, &train, &mut stream(cfg.seed, STREAM_SPOTTING));
    let mut degenerate = train_out.degenerate;
    degenerate.extend(test_out.degenerate);

    Ok(SynthCorpus {
        train,
        test,
        train_features,
        test_features,
        frequencies: SpottingFrequencies::new(expected),
        spotting,
        degenerate,
    })
}
