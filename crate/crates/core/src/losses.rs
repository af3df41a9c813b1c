//! SPML training losses over sigmoid outputs.
//!
//! Every loss sees one image: predictions `f ∈ (0,1)^L`, the index `p` of
//! the single observed positive, and returns the loss together with its
//! gradient with respect to the pre-sigmoid logits. Probabilities are
//! clamped to `[1e-7, 1 - 1e-7]` inside logarithms.
//!
//! | loss | unobserved labels are treated as |
//! |---|---|
//! | AN | negatives |
//! | AN-LS | negatives with smoothed targets `ε` / `1 - ε` |
//! | EM | maximum-entropy predictions (weight `α`) |
//! | ROLE | jointly estimated soft labels, regularized toward `k` positives |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROB_CLAMP: f64 = 1e-7;

pub const DEFAULT_LS_EPSILON: f64 = 0.1;
pub const DEFAULT_EM_ALPHA: f64 = 0.1;
pub const DEFAULT_ROLE_LAMBDA: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("observed category {observed} out of range for {len} labels")]
    ObservedOutOfRange { observed: usize, len: usize },
    #[error("estimator row has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("invalid loss parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown loss {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "an")]
    An,
    #[serde(rename = "an-ls")]
    AnLs,
    #[serde(rename = "role")]
    Role,
    #[serde(rename = "em")]
    Em,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::An, LossKind::AnLs, LossKind::Role, LossKind::Em];

    /// Lowercase identifier used on the command line and in files.
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::An => "an",
            LossKind::AnLs => "an-ls",
            LossKind::Role => "role",
            LossKind::Em => "em",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LossKind::An => "AN",
            LossKind::AnLs => "AN-LS",
            LossKind::Role => "ROLE",
            LossKind::Em => "EM",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| LossError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossSpec {
    An,
    AnLs { epsilon: f64 },
    Role { k: f64, lambda: f64 },
    Em { alpha: f64 },
}

impl LossSpec {
    pub fn an_ls(epsilon: f64) -> Result<Self, LossError> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(LossError::InvalidParameter(format!("label smoothing must be in [0, 0.5), got {epsilon}")));
        }
        Ok(LossSpec::AnLs { epsilon })
    }

    pub fn em(alpha: f64) -> Result<Self, LossError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(LossError::InvalidParameter(format!("entropy weight must be > 0, got {alpha}")));
        }
        Ok(LossSpec::Em { alpha })
    }

    pub fn role(k: f64, lambda: f64) -> Result<Self, LossError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(LossError::InvalidParameter(format!("expected positives k must be > 0, got {k}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(LossError::InvalidParameter(format!("regularizer weight must be >= 0, got {lambda}")));
        }
        Ok(LossSpec::Role { k, lambda })
    }

    pub fn kind(&self) -> LossKind {
        match self {
            LossSpec::An => LossKind::An,
            LossSpec::AnLs { .. } => LossKind::AnLs,
            LossSpec::Role { .. } => LossKind::Role,
            LossSpec::Em { .. } => LossKind::Em,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        match *self {
            LossSpec::An => Ok(()),
            LossSpec::AnLs { epsilon } => Self::an_ls(epsilon).map(drop),
            LossSpec::Role { k, lambda } => Self::role(k, lambda).map(drop),
            LossSpec::Em { alpha } => Self::em(alpha).map(drop),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// d loss / d logit, length L.
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleOutput {
    pub loss: f64,
    /// Gradient for the classifier logits (estimates held fixed).
    pub grad_logits: Vec<f64>,
    /// Gradient for the label-estimator logits (predictions held fixed).
    /// Zero at the observed positive, which is pinned.
    pub grad_estimator_logits: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp(q: f64) -> f64 {
    q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn check_observed(f: &[f64], observed: usize) -> Result<(), LossError> {
    if observed < f.len() {
        Ok(())
    } else {
        Err(LossError::ObservedOutOfRange { observed, len: f.len() })
    }
}

/// Binary entropy in nats, on the clamped probability.
pub fn binary_entropy(q: f64) -> f64 {
    let q = clamp(q);
    -q * q.ln() - (1.0 - q) * (1.0 - q).ln()
}

/// Assume negative: `-(1/L)[log f_p + Σ_{i≠p} log(1 - f_i)]`.
pub fn loss_an(f: &[f64], observed: usize) -> Result<LossOutput, LossError> {
    check_observed(f, observed)?;
    let l = f.len() as f64;
    let mut acc = 0.0;
    let mut grad = Vec::with_capacity(f.len());
    for (i, &fi) in f.iter().enumerate() {
        let t = if i == observed { 1.0 } else { 0.0 };
        acc += if i == observed { clamp(fi).ln() } else { (1.0 - clamp(fi)).ln() };
        grad.push((fi - t) / l);
    }
    Ok(LossOutput { loss: -acc / l, grad })
}

/// Assume negative with label smoothing: targets `1 - ε` on the observed
/// positive and `ε` elsewhere.
pub fn loss_an_ls(f: &[f64], observed: usize, epsilon: f64) -> Result<LossOutput, LossError> {
    check_observed(f, observed)?;
    let l = f.len() as f64;
    let mut acc = 0.0;
    let mut grad = Vec::with_capacity(f.len());
    for (i, &fi) in f.iter().enumerate() {
        let t = if i == observed { 1.0 - epsilon } else { epsilon };
        let q = clamp(fi);
        acc += t * q.ln() + (1.0 - t) * (1.0 - q).ln();
        grad.push((fi - t) / l);
    }
    Ok(LossOutput { loss: -acc / l, grad })
}

/// Entropy maximization: `-(1/L)[log f_p + α Σ_{i≠p} H(f_i)]`.
pub fn loss_em(f: &[f64], observed: usize, alpha: f64) -> Result<LossOutput, LossError> {
    check_observed(f, observed)?;
    let l = f.len() as f64;
    let mut acc = 0.0;
    let mut grad = Vec::with_capacity(f.len());
    for (i, &fi) in f.iter().enumerate() {
        if i == observed {
            acc += clamp(fi).ln();
            grad.push((fi - 1.0) / l);
        } else {
            let q = clamp(fi);
            acc += alpha * binary_entropy(fi);
            // dH/dz = f(1-f)·log((1-f)/f); the loss carries -H.
            grad.push(alpha * fi * (1.0 - fi) * (q.ln() - (1.0 - q).ln()) / l);
        }
    }
    Ok(LossOutput { loss: -acc / l, grad })
}

/// `BCE(a, b) = -(1/L) Σ [b log a + (1-b) log(1-a)]`, `a` clamped.
fn bce(a: &[f64], b: &[f64]) -> f64 {
    let l = a.len() as f64;
    -a.iter()
        .zip(b)
        .map(|(&ai, &bi)| {
            let q = clamp(ai);
            bi * q.ln() + (1.0 - bi) * (1.0 - q).ln()
        })
        .sum::<f64>()
        / l
}

/// Regularized online label estimation.
///
/// With `ỹ` the estimate row (observed positive pinned to 1):
/// `½[BCE(f, ỹ) + BCE(ỹ, f)] + λ(Σ ỹ − k)² / L²`, where each BCE treats its
/// second argument as a constant target.
pub fn loss_role(f: &[f64], estimate: &[f64], observed: usize, k: f64, lambda: f64) -> Result<RoleOutput, LossError> {
    check_observed(f, observed)?;
    if estimate.len() != f.len() {
        return Err(LossError::LengthMismatch { got: estimate.len(), expected: f.len() });
    }
    if !(k > 0.0) {
        return Err(LossError::InvalidParameter(format!("expected positives k must be > 0, got {k}")));
    }
    let l = f.len() as f64;
    let mut pinned = estimate.to_vec();
    pinned[observed] = 1.0;
    let excess = pinned.iter().sum::<f64>() - k;
    let loss = 0.5 * (bce(f, &pinned) + bce(&pinned, f)) + lambda * excess * excess / (l * l);

    let grad_logits = f.iter().zip(&pinned).map(|(&fi, &yi)| 0.5 * (fi - yi) / l).collect();
    let reg = 2.0 * lambda * excess / (l * l);
    let grad_estimator_logits = f
        .iter()
        .zip(&pinned)
        .enumerate()
        .map(|(i, (&fi, &yi))| if i == observed { 0.0 } else { 0.5 * (yi - fi) / l + reg * yi * (1.0 - yi) })
        .collect();
    Ok(RoleOutput { loss, grad_logits, grad_estimator_logits })
}
