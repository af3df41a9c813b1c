use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{from_json_bytes, IngestError};
use crate::bias::BiasKind;
use crate::dataset::CategorySet;
use crate::sampler::{BiasDescriptor, SpmlRealization};

// Fields in key order, so the derived serializer emits sorted keys.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RealizationFile {
    bias: String,
    epsilon: Option<f64>,
    observations: Vec<ObservationEntry>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationEntry {
    category_id: u64,
    image_id: u64,
}

/// Writes canonical realization JSON: sorted keys, observations ordered by
/// image id, categories as external ids. Equal realizations give equal bytes.
pub fn write_realization<W: Write>(r: &SpmlRealization, categories: &CategorySet, mut sink: W) -> Result<(), IngestError> {
    let mut observations = Vec::with_capacity(r.observations.len());
    for (&image_id, &k) in &r.observations {
        if k >= categories.len() {
            return Err(IngestError::Format(format!("image {image_id}: category index {k} out of range")));
        }
        observations.push(ObservationEntry { category_id: categories.external(k), image_id });
    }
    let file = RealizationFile { bias: r.bias.kind.as_str().to_string(), epsilon: r.bias.epsilon, observations, seed: r.seed };
    let mut bytes = serde_json::to_vec_pretty(&file).map_err(|e| IngestError::Format(e.to_string()))?;
    bytes.push(b'\n');
    sink.write_all(&bytes)?;
    Ok(())
}

pub fn read_realization<R: Read>(mut source: R, categories: &CategorySet) -> Result<SpmlRealization, IngestError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let file: RealizationFile = from_json_bytes(&bytes)?;
    let kind: BiasKind = file.bias.parse().map_err(|_| IngestError::Format(format!("unknown bias model {:?}", file.bias)))?;
    match (kind, file.epsilon) {
        (BiasKind::Location, Some(e)) if e.is_finite() && e > 0.0 => {}
        (BiasKind::Location, other) => {
            return Err(IngestError::Format(format!("location realization needs epsilon > 0, got {other:?}")))
        }
        (_, Some(_)) => return Err(IngestError::Format(format!("epsilon is only valid for location, not {kind}"))),
        (_, None) => {}
    }
    let mut observations = BTreeMap::new();
    for (k, entry) in file.observations.iter().enumerate() {
        let category = categories.index_of(entry.category_id).ok_or_else(|| {
            IngestError::Format(format!("observations[{k}]: unknown category id {}", entry.category_id))
        })?;
        if observations.insert(entry.image_id, category).is_some() {
            return Err(IngestError::Format(format!("observations[{k}]: duplicate image id {}", entry.image_id)));
        }
    }
    Ok(SpmlRealization { bias: BiasDescriptor { kind, epsilon: file.epsilon }, seed: file.seed, observations })
}
