//! Write and read the binary SPMLF feature format.
//!
//!     cargo run --example feature_files

use spml::ingest::{read_features, write_features, FeatureMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ids = vec![42, 7, 1001];
    let d = 4;
    let values: Vec<f32> = (0..ids.len() * d).map(|k| k as f32 * 0.25 - 1.0).collect();
    let m = FeatureMatrix::new(ids, d, values)?;

    let mut bytes = Vec::new();
    write_features(&m, &mut bytes)?;
    println!("{} bytes = 16 header + {} ids + {} values", bytes.len(), 8 * m.len(), 4 * m.len() * d);
    println!("header: {:02x?}", &bytes[..16]);

    let back = read_features(bytes.as_slice())?;
    println!("image 7 → {:?}", back.features_of(7).unwrap());

    bytes.push(0);
    println!("with a trailing byte: {}", read_features(bytes.as_slice()).unwrap_err());
    Ok(())
}
