//! Single-positive multi-label (SPML) learning under annotator label bias.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! * [`dataset`]: multi-label data model with instance geometry.
//! * [`ingest`]: COCO-style annotation and spotting parsers, the SPMLF
//!   feature format, realization / frequency / model files.
//! * [`bias`]: the uniform, size, location and semantic selection
//!   distributions plus empirical spotting frequencies.
//! * [`sampler`]: seeded, order-independent SPML realizations.
//! * [`losses`]: AN, AN-LS, ROLE and EM losses with analytic gradients.
//! * [`trainer`]: linear classifier training over frozen features.
//! * [`metrics`]: AP / MAP, run aggregation, bias-drop reports.
//! * [`synth`]: deterministic synthetic corpora.
//! * [`cli`]: the `spml` command-line front end.
//!
//! Runnable walkthroughs for each capability live in `examples/`:
//!
//! ```bash
//! cargo run -p spml --example bias_distributions
//! cargo run -p spml --release --example synthetic_pipeline
//! ```

pub mod bias;
pub mod cli;
pub mod dataset;
pub mod ingest;
pub mod losses;
pub mod metrics;
pub mod sampler;
pub mod synth;
pub mod trainer;

pub use bias::{BiasDistribution, BiasKind, BiasModelSpec, SemanticFallback, SpottingFrequencies};
pub use dataset::{BoundingBox, CategorySet, Dataset, ImageRecord, Instance, Split};
pub use ingest::{FeatureMatrix, SpottingPoint};
pub use losses::{LossKind, LossSpec};
pub use sampler::SpmlRealization;
pub use trainer::{LinearModel, TrainConfig};
