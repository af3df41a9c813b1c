//! Selection probabilities of the four bias models on one hand-made image.
//!
//!     cargo run --example bias_distributions

use spml::bias::{BiasModelSpec, SemanticFallback, SpottingFrequencies};
use spml::{BoundingBox, ImageRecord, Instance};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 640 × 480 image with a large off-center person, a small centered cup
    // and two mid-sized dogs. Category 3 (cat) is absent.
    let names = ["person", "cup", "dog", "cat"];
    let image = ImageRecord::from_instances(
        1,
        640,
        480,
        names.len(),
        vec![
            Instance { category: 0, bbox: BoundingBox::new(20.0, 40.0, 200.0, 400.0)? },
            Instance { category: 1, bbox: BoundingBox::new(305.0, 225.0, 30.0, 30.0)? },
            Instance { category: 2, bbox: BoundingBox::new(400.0, 300.0, 120.0, 90.0)? },
            Instance { category: 2, bbox: BoundingBox::new(450.0, 100.0, 100.0, 80.0)? },
        ],
        &[],
    )?;
    let spotting = SpottingFrequencies::new(vec![900, 40, 300, 250]);

    let models = [
        BiasModelSpec::Uniform,
        BiasModelSpec::Size,
        BiasModelSpec::location(1.0)?,
        BiasModelSpec::semantic(spotting, SemanticFallback::Uniform),
    ];
    print!("{:<10}", "");
    for n in names {
        print!("{n:>9}");
    }
    println!();
    for m in &models {
        let p = m.distribution(&image)?;
        print!("{:<10}", m.kind());
        for v in p.probs() {
            print!("{v:>9.4}");
        }
        println!();
    }
    Ok(())
}
