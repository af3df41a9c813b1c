//! Train a linear classifier on one realization with validation-based
//! snapshot selection, then save it as JSON.
//!
//!     cargo run --release --example train_linear [an|an-ls|role|em]

use spml::bias::BiasModelSpec;
use spml::losses::{LossKind, LossSpec};
use spml::sampler::sample_realization;
use spml::synth::{self, SynthConfig};
use spml::trainer::{self, LinearModel, TrainConfig, Validation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kind: LossKind = std::env::args().nth(1).as_deref().unwrap_or("an").parse()?;
    let corpus = synth::generate(&SynthConfig { n_train: 1000, n_test: 300, ..SynthConfig::default() })?;
    let realization = sample_realization(&corpus.train, &BiasModelSpec::Size, 1)?;
    let loss = match kind {
        LossKind::An => LossSpec::An,
        LossKind::AnLs => LossSpec::an_ls(0.1)?,
        LossKind::Role => LossSpec::role(2.25, 1.0)?,
        LossKind::Em => LossSpec::em(0.1)?,
    };
    let cfg = TrainConfig { learning_rate: 1e-2, epochs: 10, ..TrainConfig::default() };
    // The test split doubles as validation here to keep the example short.
    let val = Validation { features: &corpus.test_features, dataset: &corpus.test };
    let (model, log) = trainer::train(&corpus.train_features, &realization, corpus.train.num_labels(), &loss, &cfg, Some(val))?;

    println!("loss {} | initial training loss {:.4}", kind.label(), log.initial_loss);
    for e in &log.epochs {
        println!("epoch {:>2}: train loss {:.4}  val MAP {:>6.2}", e.epoch, e.mean_loss, e.val_map.unwrap_or(f64::NAN));
    }
    println!("kept epoch {:?}", log.best_epoch);

    let json = model.to_json();
    let back = LinearModel::from_json(&json)?;
    assert_eq!(back, model);
    println!("model JSON: {} bytes, L = {}, d = {}", json.len(), model.num_labels(), model.dim());
    Ok(())
}
