//! Per-epoch success, iteration and retrieval metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One task's outcome in one epoch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub solved: bool,
    pub iterations: u32,
    pub positives: usize,
    pub negatives: usize,
}

/// A task that failed in `from_epoch` and passed in `to_epoch`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flip {
    pub task_id: String,
    pub from_epoch: usize,
    pub to_epoch: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("epoch {epoch} has {found} tasks, expected {expected}")]
    RaggedInput { epoch: usize, expected: usize, found: usize },
    #[error("epoch {epoch} position {position} holds task `{found}`, expected `{expected}`")]
    TaskOrder { epoch: usize, position: usize, expected: String, found: String },
    #[error("no tasks")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub tasks: usize,
    pub solved: usize,
    /// Success rate within this epoch.
    pub sr: f64,
    /// Fraction of tasks solved in this or any earlier epoch.
    pub csr: f64,
    pub mean_iterations: f64,
    pub iteration_histogram: BTreeMap<u32, usize>,
    pub first_attempt_rate: f64,
    /// Tasks failed in the previous epoch and solved in this one.
    pub flips: Vec<Flip>,
    /// Tasks solved in the previous epoch and failed in this one.
    pub regressions: Vec<String>,
    pub positives_retrieved: usize,
    pub negatives_retrieved: usize,
    pub empty_bundles: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLedger {
    pub epochs: Vec<EpochMetrics>,
    /// Tasks failed in the first epoch and solved in the last.
    pub flips_first_to_last: Vec<Flip>,
}

impl MetricsLedger {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledgers serialize")
    }

    pub fn sr(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.sr).collect()
    }

    pub fn csr(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.csr).collect()
    }

    pub fn mean_iterations(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_iterations).collect()
    }

    pub fn first_attempt_rate(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.first_attempt_rate).collect()
    }

    /// Tab-separated per-epoch table with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tsr\tcsr\tmean_iterations\tfirst_attempt_rate\tflips\tpositives\tnegatives\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}\n",
                e.epoch,
                e.sr,
                e.csr,
                e.mean_iterations,
                e.first_attempt_rate,
                e.flips.len(),
                e.positives_retrieved,
                e.negatives_retrieved
            ));
        }
        out
    }
}

/// Per-epoch metrics from a rectangular epochs × tasks table. Every epoch
/// must list the same tasks in the same order.
pub fn compute_metrics(rows: &[Vec<TaskResult>]) -> Result<MetricsLedger, MetricsError> {
    let Some(first) = rows.first() else {
        return Ok(MetricsLedger::default());
    };
    let n = first.len();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    for (e, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(MetricsError::RaggedInput { epoch: e + 1, expected: n, found: row.len() });
        }
        for (i, (a, b)) in first.iter().zip(row).enumerate() {
            if a.task_id != b.task_id {
                return Err(MetricsError::TaskOrder {
                    epoch: e + 1,
                    position: i,
                    expected: a.task_id.clone(),
                    found: b.task_id.clone(),
                });
            }
        }
    }

    let mut ever = vec![false; n];
    let mut epochs = Vec::with_capacity(rows.len());
    for (e, row) in rows.iter().enumerate() {
        let mut histogram = BTreeMap::new();
        for (i, t) in row.iter().enumerate() {
            ever[i] |= t.solved;
            *histogram.entry(t.iterations).or_insert(0) += 1;
        }
        let (flips, regressions) = match e.checked_sub(1).map(|p| &rows[p]) {
            Some(prev) => (
                prev.iter()
                    .zip(row)
                    .filter(|(a, b)| !a.solved && b.solved)
                    .map(|(_, b)| Flip { task_id: b.task_id.clone(), from_epoch: e, to_epoch: e + 1 })
                    .collect(),
                prev.iter().zip(row).filter(|(a, b)| a.solved && !b.solved).map(|(_, b)| b.task_id.clone()).collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        let solved = row.iter().filter(|t| t.solved).count();
        let nf = n as f64;
        epochs.push(EpochMetrics {
            epoch: e + 1,
            tasks: n,
            solved,
            sr: solved as f64 / nf,
            csr: ever.iter().filter(|s| **s).count() as f64 / nf,
            mean_iterations: row.iter().map(|t| t.iterations as f64).sum::<f64>() / nf,
            iteration_histogram: histogram,
            first_attempt_rate: row.iter().filter(|t| t.solved && t.iterations == 1).count() as f64 / nf,
            flips,
            regressions,
            positives_retrieved: row.iter().map(|t| t.positives).sum(),
            negatives_retrieved: row.iter().map(|t| t.negatives).sum(),
            empty_bundles: row.iter().filter(|t| t.positives + t.negatives == 0).count(),
        });
    }
    let last = rows.last().expect("non-empty");
    let flips_first_to_last = first
        .iter()
        .zip(last)
        .filter(|(a, b)| !a.solved && b.solved)
        .map(|(_, b)| Flip { task_id: b.task_id.clone(), from_epoch: 1, to_epoch: rows.len() })
        .collect();
    Ok(MetricsLedger { epochs, flips_first_to_last })
}
