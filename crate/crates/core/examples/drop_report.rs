//! Bias-drop summary computed from the published COCO MAP table.
//!
//!     cargo run --example drop_report

use spml::bias::BiasKind;
use spml::losses::LossKind;
use spml::metrics::{drop_report, render_markdown, MapTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let published = [
        (LossKind::An, [62.3, 57.0, 61.0, 59.8]),
        (LossKind::AnLs, [64.8, 56.7, 62.7, 59.8]),
        (LossKind::Role, [66.3, 60.1, 66.4, 66.4]),
        (LossKind::Em, [70.7, 61.2, 68.4, 65.6]),
    ];
    let mut table = MapTable::new();
    for (loss, row) in published {
        for (bias, map) in BiasKind::ALL.into_iter().zip(row) {
            table.insert_mean(loss, bias, map);
        }
    }
    let drops = drop_report(&table)?;
    print!("{}", render_markdown(&table, Some(&drops)));
    Ok(())
}
