//! SPMLF: frozen feature matrices keyed by image id.
//!
//! ```text
//! offset  size      field
//! 0       8         magic "SPMLF1\0\0"
//! 8       4         N, u32 little-endian
//! 12      4         d, u32 little-endian
//! 16      8·N       image ids, u64 little-endian
//! 16+8N   4·N·d     values, f32 little-endian, row-major
//! ```
//!
//! No padding and no trailing bytes.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::IngestError;

pub const SPMLF_MAGIC: [u8; 8] = *b"SPMLF1\0\0";

/// `N × d` matrix; row `r` holds the features of `image_ids[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    image_ids: Vec<u64>,
    dim: usize,
    values: Vec<f32>,
    rows: HashMap<u64, usize>,
}

impl FeatureMatrix {
    pub fn new(image_ids: Vec<u64>, dim: usize, values: Vec<f32>) -> Result<Self, IngestError> {
        let expected = image_ids
            .len()
            .checked_mul(dim)
            .ok_or_else(|| IngestError::Format("N·d overflows".into()))?;
        if values.len() != expected {
            return Err(IngestError::Format(format!(
                "expected {expected} values for {} rows of dim {dim}, got {}",
                image_ids.len(),
                values.len()
            )));
        }
        if u32::try_from(image_ids.len()).is_err() || u32::try_from(dim).is_err() {
            return Err(IngestError::Format("N and d must fit in u32".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(IngestError::Format(format!("non-finite value at row {}, column {}", pos / dim, pos % dim)));
        }
        let mut rows = HashMap::with_capacity(image_ids.len());
        for (r, &id) in image_ids.iter().enumerate() {
            if rows.insert(id, r).is_some() {
                return Err(IngestError::Format(format!("duplicate image id {id}")));
            }
        }
        Ok(Self { image_ids, dim, values, rows })
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn image_ids(&self) -> &[u64] {
        &self.image_ids
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_of(&self, image_id: u64) -> Option<usize> {
        self.rows.get(&image_id).copied()
    }

    pub fn features_of(&self, image_id: u64) -> Option<&[f32]> {
        self.row_of(image_id).map(|r| self.row(r))
    }
}

pub fn write_features<W: Write>(matrix: &FeatureMatrix, mut sink: W) -> Result<(), IngestError> {
    let n = u32::try_from(matrix.len()).map_err(|_| IngestError::Format("N exceeds u32".into()))?;
    let d = u32::try_from(matrix.dim).map_err(|_| IngestError::Format("d exceeds u32".into()))?;
    let mut buf = Vec::with_capacity(16 + 8 * matrix.len() + 4 * matrix.values.len());
    buf.extend_from_slice(&SPMLF_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    for id in &matrix.image_ids {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    for v in &matrix.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&buf)?;
    Ok(())
}

pub fn read_features<R: Read>(mut source: R) -> Result<FeatureMatrix, IngestError> {
    let mut header = [0u8; 16];
    read_exact_or_truncated(&mut source, &mut header, "header")?;
    if header[..8] != SPMLF_MAGIC {
        return Err(IngestError::Format(format!("bad magic {:02x?}", &header[..8])));
    }
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let payload = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(4))
        .and_then(|v| v.checked_add(n.checked_mul(8)?))
        .ok_or_else(|| IngestError::Format(format!("N·d overflows for N={n}, d={d}")))?;

    let mut body = Vec::new();
    // One byte past the payload is enough to detect trailing data.
    source.take(payload as u64 + 1).read_to_end(&mut body)?;
    if body.len() < payload {
        return Err(IngestError::Format(format!("truncated payload: expected {payload} bytes, got {}", body.len())));
    }
    if body.len() > payload {
        return Err(IngestError::Format("trailing bytes after payload".into()));
    }
    let (id_bytes, value_bytes) = body.split_at(8 * n);
    let image_ids = id_bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    let values = value_bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    FeatureMatrix::new(image_ids, d, values)
}

fn read_exact_or_truncated<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<(), IngestError> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => IngestError::Format(format!("truncated {what}")),
        _ => IngestError::Io(e),
    })
}
