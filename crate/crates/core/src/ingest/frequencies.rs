use std::collections::BTreeMap;

use super::{from_json_bytes, IngestError};
use crate::bias::SpottingFrequencies;
use crate::dataset::CategorySet;

/// `{"<external category id>": count, ...}` with keys in ascending numeric
/// order. Every category of `categories` is present.
pub fn write_frequencies(freqs: &SpottingFrequencies, categories: &CategorySet) -> Vec<u8> {
    let mut out = String::from("{");
    let mut entries: Vec<(u64, u64)> = (0..categories.len()).map(|k| (categories.external(k), freqs.counts()[k])).collect();
    entries.sort_unstable();
    for (n, (id, count)) in entries.iter().enumerate() {
        if n > 0 {
            out.push(',');
        }
        out.push_str(&format!("\n  \"{id}\": {count}"));
    }
    if !entries.is_empty() {
        out.push('\n');
    }
    out.push_str("}\n");
    out.into_bytes()
}

/// Categories missing from the file get count 0; ids unknown to
/// `categories` are an error.
pub fn read_frequencies(bytes: &[u8], categories: &CategorySet) -> Result<SpottingFrequencies, IngestError> {
    let raw: BTreeMap<String, u64> = from_json_bytes(bytes)?;
    let mut counts = vec![0u64; categories.len()];
    for (key, count) in raw {
        let id: u64 = key.parse().map_err(|_| IngestError::parse(key.clone(), "key is not a category id"))?;
        let k = categories
            .index_of(id)
            .ok_or_else(|| IngestError::Integrity(format!("frequency for unknown category id {id}")))?;
        counts[k] = count;
    }
    Ok(SpottingFrequencies::new(counts))
}
