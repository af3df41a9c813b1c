//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use rand::{Rng, RngCore};
use spml::{BoundingBox, ImageRecord, Instance};

/// A random image where every positive category has at least one box of
/// positive area, so all four bias models are defined on it.
pub fn fuzz_image(rng: &mut impl RngCore, image_id: u64, l: usize) -> ImageRecord {
    let width = rng.random_range(1..=1200u32);
    let height = rng.random_range(1..=1200u32);
    let mut labels = vec![false; l];
    labels[rng.random_range(0..l)] = true;
    for lab in labels.iter_mut() {
        if rng.random_bool(0.3) {
            *lab = true;
        }
    }
    let mut instances = Vec::new();
    for (c, _) in labels.iter().enumerate().filter(|(_, &on)| on) {
        for _ in 0..rng.random_range(1..=3) {
            let x = rng.random_range(0.0..f64::from(width));
            let y = rng.random_range(0.0..f64::from(height));
            let w = rng.random_range(0.5..=f64::from(width) + 1.0);
            let h = rng.random_range(0.5..=f64::from(height) + 1.0);
            instances.push(Instance { category: c, bbox: BoundingBox::new(x, y, w, h).unwrap() });
        }
    }
    ImageRecord::new(image_id, width, height, labels, instances).unwrap()
}

pub fn fuzz_frequencies(rng: &mut impl RngCore, l: usize) -> Vec<u64> {
    (0..l).map(|_| if rng.random_bool(0.25) { 0 } else { rng.random_range(1..500) }).collect()
}

/// Selection probabilities computed straight from the definitions.
pub mod oracle {
    use super::*;

    fn normalize(m: Vec<f64>) -> Vec<f64> {
        let z: f64 = m.iter().sum();
        m.into_iter().map(|v| v / z).collect()
    }

    pub fn uniform(img: &ImageRecord) -> Vec<f64> {
        let n = img.labels().iter().filter(|&&b| b).count() as f64;
        img.labels().iter().map(|&b| if b { 1.0 / n } else { 0.0 }).collect()
    }

    pub fn size(img: &ImageRecord) -> Vec<f64> {
        let m = (0..img.num_labels())
            .map(|c| img.instances().iter().filter(|i| i.category == c).map(|i| i.bbox.w() * i.bbox.h()).sum())
            .collect();
        normalize(m)
    }

    pub fn location(img: &ImageRecord, eps: f64) -> Vec<f64> {
        let (cx, cy) = (img.width() as f64 * 0.5, img.height() as f64 * 0.5);
        let m = (0..img.num_labels())
            .map(|c| {
                let d: Vec<f64> = img
                    .instances()
                    .iter()
                    .filter(|i| i.category == c)
                    .map(|i| {
                        let bx = i.bbox.x() + 0.5 * i.bbox.w();
                        let by = i.bbox.y() + 0.5 * i.bbox.h();
                        ((bx - cx).powi(2) + (by - cy).powi(2)).sqrt()
                    })
                    .collect();
                if d.is_empty() {
                    0.0
                } else {
                    1.0 / (eps + d.iter().sum::<f64>() / d.len() as f64)
                }
            })
            .collect();
        normalize(m)
    }

    pub fn semantic(img: &ImageRecord, freqs: &[u64]) -> Vec<f64> {
        let m: Vec<f64> = img.labels().iter().zip(freqs).map(|(&b, &f)| if b { f as f64 } else { 0.0 }).collect();
        if m.iter().all(|&v| v == 0.0) {
            uniform(img)
        } else {
            normalize(m)
        }
    }
}

/// Brute-force AP: each positive's precision from an O(n²) rank count.
/// Contributions are summed in rank order.
pub fn brute_force_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n = scores.len();
    let rank = |i: usize| (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count() + 1;
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i]).map(rank).collect();
    if pos.is_empty() {
        return None;
    }
    pos.sort_unstable();
    let sum: f64 = pos.iter().enumerate().map(|(k, &r)| (k + 1) as f64 / r as f64).sum();
    Some(sum / pos.len() as f64)
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `-(1/L) Σ [t log p + (1-t) log(1-p)]`, `p` clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce(p: &[f64], t: &[f64]) -> f64 {
    let term = |p: f64, t: f64| {
        let p = p.clamp(1e-7, 1.0 - 1e-7);
        t * p.ln() + (1.0 - t) * (1.0 - p).ln()
    };
    -p.iter().zip(t).map(|(&p, &t)| term(p, t)).sum::<f64>() / p.len() as f64
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let up = f(&xp);
            xp[i] = orig - h;
            let down = f(&xp);
            xp[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-12)`
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

/// Published COCO test MAP means: rows AN, AN-LS, ROLE, EM; columns uniform,
/// size, location, semantic.
pub const PUBLISHED_MAP: [[f64; 4]; 4] = [
    [62.3, 57.0, 61.0, 59.8],
    [64.8, 56.7, 62.7, 59.8],
    [66.3, 60.1, 66.4, 66.4],
    [70.7, 61.2, 68.4, 65.6],
];

/// Shuffles the `images` and `annotations` arrays of a COCO JSON file.
pub fn permute_coco(bytes: &[u8], rng: &mut impl RngCore) -> Vec<u8> {
    use rand::seq::SliceRandom;
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    for key in ["images", "annotations", "categories"] {
        if let Some(arr) = v.get_mut(key).and_then(|a| a.as_array_mut()) {
            arr.shuffle(rng);
        }
    }
    serde_json::to_vec(&v).unwrap()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
