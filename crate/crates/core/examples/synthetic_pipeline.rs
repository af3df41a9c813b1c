//! Full grid on a synthetic corpus: every bias × every loss, one seed.
//!
//!     cargo run --release --example synthetic_pipeline [seed]

use std::time::Instant;

use spml::bias::{BiasModelSpec, SemanticFallback};
use spml::losses::{LossKind, LossSpec};
use spml::metrics::{self, MapTable, RunStats};
use spml::sampler::sample_realization;
use spml::synth::{self, SynthConfig};
use spml::trainer::{self, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let start = Instant::now();
    let corpus = synth::generate(&SynthConfig { seed, ..SynthConfig::default() })?;
    let l = corpus.train.num_labels();
    let mean_positives = corpus.train.images().iter().map(|i| i.positives().len()).sum::<usize>() as f64
        / corpus.train.images().len() as f64;

    let biases = [
        BiasModelSpec::Uniform,
        BiasModelSpec::Size,
        BiasModelSpec::location(1.0)?,
        BiasModelSpec::semantic(corpus.frequencies.clone(), SemanticFallback::Uniform),
    ];
    let losses = [LossSpec::An, LossSpec::an_ls(0.1)?, LossSpec::role(mean_positives, 1.0)?, LossSpec::em(0.1)?];

    let mut table = MapTable::new();
    for bias in &biases {
        let realization = sample_realization(&corpus.train, bias, seed)?;
        for loss in &losses {
            let (model, _) = trainer::train(&corpus.train_features, &realization, l, loss, &TrainConfig::default(), None)?;
            let map = trainer::evaluate(&model, &corpus.test_features, &corpus.test)?.map;
            table.insert(loss.kind(), bias.kind(), RunStats { mean: map, std: 0.0, n: 1 });
        }
    }
    let drops = metrics::drop_report(&table)?;
    println!("{}", metrics::render_markdown(&table, Some(&drops)));
    println!("k = {mean_positives:.3}; {} losses × {} biases in {:.1?}", LossKind::ALL.len(), biases.len(), start.elapsed());
    Ok(())
}
