//! Average precision, MAP, run aggregation and bias-drop reports.
//!
//! Ranking is by descending score with ties broken by ascending original
//! index, so AP is a deterministic function of `(scores, labels)`. MAP is
//! reported in percentage points.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bias::BiasKind;
use crate::losses::LossKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("average precision is undefined without positive labels")]
    NoPositives,
    #[error("every category column is empty")]
    AllColumnsEmpty,
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("cannot aggregate an empty list of runs")]
    EmptyRuns,
    #[error("table has no uniform column")]
    MissingUniform,
    #[error("table has no biased column to compare against uniform")]
    NoBiasedColumns,
}

/// Item indices ordered by descending score, ties by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps ascending index order among equal scores.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in ranking(scores).iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapSummary {
    /// Percentage points, mean over retained categories.
    pub map: f64,
    /// AP per dense category; `None` for skipped columns.
    pub per_category: Vec<Option<f64>>,
    /// Dense categories without any positive, excluded from the mean.
    pub skipped: Vec<usize>,
}

/// MAP over an `N × L` row-major score matrix and matching labels.
pub fn mean_average_precision(scores: &[f64], labels: &[bool], num_labels: usize) -> Result<MapSummary, MetricError> {
    if scores.len() != labels.len() || num_labels == 0 || !scores.len().is_multiple_of(num_labels) {
        return Err(MetricError::Length(format!(
            "{} scores, {} labels, {num_labels} categories",
            scores.len(),
            labels.len()
        )));
    }
    let n = scores.len() / num_labels;
    let mut per_category = Vec::with_capacity(num_labels);
    let mut skipped = Vec::new();
    let mut column_scores = vec![0.0; n];
    let mut column_labels = vec![false; n];
    for c in 0..num_labels {
        for r in 0..n {
            column_scores[r] = scores[r * num_labels + c];
            column_labels[r] = labels[r * num_labels + c];
        }
        match average_precision(&column_scores, &column_labels) {
            Ok(ap) => per_category.push(Some(ap)),
            Err(MetricError::NoPositives) => {
                per_category.push(None);
                skipped.push(c);
            }
            Err(e) => return Err(e),
        }
    }
    let kept: Vec<f64> = per_category.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(MetricError::AllColumnsEmpty);
    }
    if !skipped.is_empty() {
        log::info!("MAP skipped {} categories without positives: {skipped:?}", skipped.len());
    }
    let map = 100.0 * kept.iter().sum::<f64>() / kept.len() as f64;
    Ok(MapSummary { map, per_category, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub mean: f64,
    /// Population standard deviation (divisor n).
    pub std: f64,
    pub n: usize,
}

pub fn aggregate_runs(maps: &[f64]) -> Result<RunStats, MetricError> {
    if maps.is_empty() {
        return Err(MetricError::EmptyRuns);
    }
    let n = maps.len() as f64;
    let mean = maps.iter().sum::<f64>() / n;
    let var = maps.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
    Ok(RunStats { mean, std: var.sqrt(), n: maps.len() })
}

/// One evaluated run, as written by `spml eval`.
// Fields in sorted key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub bias: BiasKind,
    pub loss: LossKind,
    pub map: f64,
    pub per_category: Vec<CategoryAp>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAp {
    /// `null` when the category has no test positives.
    pub ap: Option<f64>,
    pub category_id: u64,
}

/// MAP cells keyed by (loss, bias).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapTable {
    cells: BTreeMap<(LossKind, BiasKind), RunStats>,
}

impl MapTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, loss: LossKind, bias: BiasKind, stats: RunStats) {
        self.cells.insert((loss, bias), stats);
    }

    /// A cell holding a single published mean.
    pub fn insert_mean(&mut self, loss: LossKind, bias: BiasKind, mean: f64) {
        self.insert(loss, bias, RunStats { mean, std: 0.0, n: 1 });
    }

    pub fn get(&self, loss: LossKind, bias: BiasKind) -> Option<&RunStats> {
        self.cells.get(&(loss, bias))
    }

    pub fn from_runs(runs: &[RunRecord]) -> Self {
        let mut grouped: BTreeMap<(LossKind, BiasKind), Vec<f64>> = BTreeMap::new();
        for r in runs {
            grouped.entry((r.loss, r.bias)).or_default().push(r.map);
        }
        let cells = grouped
            .into_iter()
            .map(|(key, maps)| (key, aggregate_runs(&maps).expect("groups are non-empty")))
            .collect();
        Self { cells }
    }

    pub fn losses(&self) -> Vec<LossKind> {
        let mut out: Vec<LossKind> = self.cells.keys().map(|(l, _)| *l).collect();
        out.dedup();
        out
    }
}

/// Average MAP lost when moving from uniform to a biased realization.
/// Positive values are drops.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropReport {
    /// Per non-uniform bias: mean over losses of `uniform - bias`.
    pub per_bias: BTreeMap<BiasKind, f64>,
    /// Per loss: mean over non-uniform biases of `uniform - bias`.
    pub per_loss: BTreeMap<LossKind, f64>,
}

pub fn drop_report(table: &MapTable) -> Result<DropReport, MetricError> {
    let mut by_bias: BTreeMap<BiasKind, Vec<f64>> = BTreeMap::new();
    let mut by_loss: BTreeMap<LossKind, Vec<f64>> = BTreeMap::new();
    let mut any_uniform = false;
    for loss in table.losses() {
        let Some(uniform) = table.get(loss, BiasKind::Uniform) else {
            continue;
        };
        any_uniform = true;
        for bias in BiasKind::ALL.into_iter().filter(|b| *b != BiasKind::Uniform) {
            if let Some(cell) = table.get(loss, bias) {
                let drop = uniform.mean - cell.mean;
                by_bias.entry(bias).or_default().push(drop);
                by_loss.entry(loss).or_default().push(drop);
            }
        }
    }
    if !any_uniform {
        return Err(MetricError::MissingUniform);
    }
    if by_bias.is_empty() {
        return Err(MetricError::NoBiasedColumns);
    }
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Ok(DropReport {
        per_bias: by_bias.into_iter().map(|(k, v)| (k, mean(v))).collect(),
        per_loss: by_loss.into_iter().map(|(k, v)| (k, mean(v))).collect(),
    })
}

/// Losses as rows, biases as columns, `mean ± std` cells, `—` for missing
/// cells, followed by the drop summary when it can be computed.
pub fn render_markdown(table: &MapTable, drops: Option<&DropReport>) -> String {
    let mut out = String::from("| Loss |");
    for b in BiasKind::ALL {
        let _ = write!(out, " {b} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(BiasKind::ALL.len()));
    out.push('\n');
    for loss in LossKind::ALL {
        if !table.cells.keys().any(|(l, _)| *l == loss) {
            continue;
        }
        let _ = write!(out, "| {} |", loss.label());
        for bias in BiasKind::ALL {
            match table.get(loss, bias) {
                Some(s) => {
                    let _ = write!(out, " {:.1} ± {:.1} |", s.mean, s.std);
                }
                None => out.push_str(" — |"),
            }
        }
        out.push('\n');
    }
    if let Some(d) = drops {
        out.push_str("\nAverage MAP drop vs uniform, by bias (mean over losses):\n\n");
        for (bias, v) in &d.per_bias {
            let _ = writeln!(out, "- {bias}: {:.1} MAP", -v);
        }
        out.push_str("\nAverage MAP drop vs uniform, by loss (mean over biases):\n\n");
        for (loss, v) in &d.per_loss {
            let _ = writeln!(out, "- {}: {:.1} MAP", loss.label(), -v);
        }
    }
    out
}

#[derive(Serialize)]
struct ReportCell {
    bias: BiasKind,
    loss: LossKind,
    mean: f64,
    n: usize,
    std: f64,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    cells: Vec<ReportCell>,
    drops: Option<&'a DropReport>,
    missing: Vec<[String; 2]>,
}

/// Canonical JSON form of the report. `missing` lists (loss, bias) cells
/// absent for losses that appear in the table.
pub fn render_json(table: &MapTable, drops: Option<&DropReport>) -> Vec<u8> {
    let cells = table
        .cells
        .iter()
        .map(|(&(loss, bias), s)| ReportCell { bias, loss, mean: s.mean, n: s.n, std: s.std })
        .collect();
    let mut missing = Vec::new();
    for loss in table.losses() {
        for bias in BiasKind::ALL {
            if table.get(loss, bias).is_none() {
                missing.push([loss.as_str().to_string(), bias.as_str().to_string()]);
            }
        }
    }
    let mut out = serde_json::to_vec_pretty(&ReportFile { cells, drops, missing }).expect("report serializes");
    out.push(b'\n');
    out
}
