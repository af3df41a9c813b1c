//! Seeded single-positive realizations, one per (bias, seed), written in the
//! on-disk JSON format.
//!
//!     cargo run --example sample_realizations

use spml::bias::{BiasModelSpec, SemanticFallback};
use spml::ingest::write_realization;
use spml::sampler::generate_suite;
use spml::synth::{self, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = synth::generate(&SynthConfig { n_train: 6, n_test: 1, num_labels: 4, dim: 4, ..SynthConfig::default() })?;
    let specs = [
        BiasModelSpec::Uniform,
        BiasModelSpec::Size,
        BiasModelSpec::location(1.0)?,
        BiasModelSpec::semantic(corpus.frequencies.clone(), SemanticFallback::Uniform),
    ];
    let suite = generate_suite(&corpus.train, &specs, &[1, 2, 3])?;

    println!("image  positives      observed by (uniform, size, location, semantic) × seeds 1..3");
    for img in corpus.train.images() {
        let cats = corpus.train.categories();
        let pos: Vec<u64> = img.positives().into_iter().map(|k| cats.external(k)).collect();
        let seen: Vec<String> = suite.iter().map(|r| cats.external(r.observed(img.image_id()).unwrap()).to_string()).collect();
        println!("{:>5}  {:<14} {}", img.image_id(), format!("{pos:?}"), seen.join(" "));
    }

    let mut out = Vec::new();
    write_realization(&suite[4], corpus.train.categories(), &mut out)?;
    println!("\n{}", String::from_utf8(out)?);
    Ok(())
}
