//! Average precision and MAP on a tiny score matrix, including a tie and a
//! category with no positives.
//!
//!     cargo run --example evaluate_map

use spml::metrics::{aggregate_runs, average_precision, mean_average_precision};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Four images × three categories, row-major.
    let scores = [
        0.9, 0.2, 0.1, //
        0.7, 0.7, 0.3, //
        0.4, 0.7, 0.2, //
        0.1, 0.1, 0.6,
    ];
    let labels = [
        true, false, false, //
        false, true, false, //
        true, false, false, //
        false, true, false,
    ];
    let s = mean_average_precision(&scores, &labels, 3)?;
    for (c, ap) in s.per_category.iter().enumerate() {
        match ap {
            Some(ap) => println!("category {c}: AP {ap:.4}"),
            None => println!("category {c}: no positives, skipped"),
        }
    }
    println!("MAP {:.2}", s.map);

    // Ties are broken by ascending image index.
    println!("tie, positive first: {}", average_precision(&[0.5, 0.5], &[true, false])?);
    println!("tie, positive second: {}", average_precision(&[0.5, 0.5], &[false, true])?);

    let runs = aggregate_runs(&[56.9, 57.0, 57.1])?;
    println!("three seeds: {:.1} ± {:.2} (population std)", runs.mean, runs.std);
    Ok(())
}
