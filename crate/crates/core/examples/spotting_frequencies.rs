//! Turn object-spotting clicks into per-category frequencies.
//!
//!     cargo run --example spotting_frequencies

use spml::bias::spotting_frequencies;
use spml::ingest::{parse_annotations, parse_spotting, write_frequencies};
use spml::Split;

const ANNOTATIONS: &str = r#"{
  "images": [{"id": 7, "width": 100, "height": 100}],
  "annotations": [
    {"image_id": 7, "category_id": 1, "bbox": [0, 0, 50, 50]},
    {"image_id": 7, "category_id": 2, "bbox": [60, 60, 30, 30]}
  ],
  "categories": [{"id": 1, "name": "person"}, {"id": 2, "name": "dog"}]
}"#;

const SPOTTING: &str = r#"[
  {"image_id": 7, "pixel_x": 10, "pixel_y": 10, "category_id": 1},
  {"image_id": 7, "pixel_x": 50, "pixel_y": 50, "category_id": 1},
  {"image_id": 7, "pixel_x": 70, "pixel_y": 70, "category_id": 1},
  {"image_id": 7, "pixel_x": 75, "pixel_y": 75, "category_id": 2},
  {"image_id": 8, "pixel_x": 75, "pixel_y": 75, "category_id": 2}
]"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = parse_annotations(ANNOTATIONS.as_bytes(), Split::Val)?.dataset;
    let points = parse_spotting(SPOTTING.as_bytes(), &dataset)?;
    for p in &points {
        let note = if p.is_flagged() { "  (unknown image or category: discarded)" } else { "" };
        println!("{:?}{note}", p.point);
    }
    let raw: Vec<_> = points.iter().map(|p| p.point).collect();
    let freqs = spotting_frequencies(&dataset, &raw);
    // The third click lands in the dog box but names "person": filtered out.
    println!("{}", String::from_utf8(write_frequencies(&freqs, dataset.categories()))?);
    Ok(())
}
