//! The feature-exporter side is not part of this crate; this pins down the
//! file layout it must produce so that the primary reader accepts it.

use spml::ingest::{self, SPMLF_MAGIC};

/// Stand-in backbone: a fixed, input-dependent embedding per image id.
fn stub_backbone(image_id: u64, d: usize) -> Vec<f32> {
    (0..d).map(|j| ((image_id as f32) * 0.37 + j as f32).sin() * 3.0 - (j as f32) / 7.0).collect()
}

/// What an exporter writes: magic, u32 LE N, u32 LE d, N u64 LE ids,
/// N·d f32 LE values, nothing else.
fn export(ids: &[u64], d: usize) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"SPMLF1\0\0");
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for &id in ids {
        for v in stub_backbone(id, d) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[test]
fn stub_export_round_trips_bit_exactly() {
    let ids = [139u64, 285, 632, 724, 776, 785, 802];
    let d = 2048;
    let bytes = export(&ids, d);
    assert_eq!(&bytes[..8], &SPMLF_MAGIC);

    let m = ingest::read_features(bytes.as_slice()).unwrap();
    assert_eq!(m.len(), ids.len());
    assert_eq!(m.dim(), d);
    assert_eq!(m.image_ids(), &ids);
    for &id in &ids {
        let want = stub_backbone(id, d);
        let got = m.features_of(id).unwrap();
        assert!(got.iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    let mut rewritten = Vec::new();
    ingest::write_features(&m, &mut rewritten).unwrap();
    assert_eq!(rewritten, bytes);
}

#[test]
fn malformed_exports_are_rejected() {
    let good = export(&[1, 2], 3);
    assert!(ingest::read_features(&good[..good.len() - 1]).is_err());
    let mut trailing = good.clone();
    trailing.push(0);
    assert!(ingest::read_features(trailing.as_slice()).is_err());
    let mut magic = good.clone();
    magic[5] = b'2';
    assert!(ingest::read_features(magic.as_slice()).is_err());
    assert!(ingest::read_features(&good[..10]).is_err());
}
