//! External clustering quality: Hungarian-matched accuracy, normalized
//! mutual information and adjusted Rand index.
//!
//! All three are invariant to renaming cluster ids on either side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::LabelVector;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("label length mismatch: pred={pred}, truth={truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("at least {needed} samples are required (got {got})")]
    TooFewSamples { needed: usize, got: usize },
    #[error("contingency table rows have unequal lengths")]
    Ragged,
}

/// Counts of samples per (predicted cluster, true class) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    n: u64,
}

impl ContingencyTable {
    /// Builds the table after compacting both label sets to contiguous ids.
    pub fn new(pred: &LabelVector, truth: &LabelVector) -> Result<Self, MetricsError> {
        if pred.len() != truth.len() {
            return Err(MetricsError::LengthMismatch {
                pred: pred.len(),
                truth: truth.len(),
            });
        }
        let p = pred.remap_contiguous();
        let t = truth.remap_contiguous();
        let mut counts = vec![vec![0u64; t.label_bound()]; p.label_bound()];
        for (&a, &b) in p.as_slice().iter().zip(t.as_slice()) {
            counts[a][b] += 1;
        }
        Ok(Self {
            counts,
            n: pred.len() as u64,
        })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let width = counts.first().map_or(0, Vec::len);
        if counts.iter().any(|r| r.len() != width) {
            return Err(MetricsError::Ragged);
        }
        let n = counts.iter().flatten().sum();
        Ok(Self { counts, n })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    fn pred_sizes(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn truth_sizes(&self) -> Vec<u64> {
        let width = self.counts.first().map_or(0, Vec::len);
        (0..width)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Largest number of agreeing samples over one-to-one cluster/class
    /// matchings.
    pub fn max_matching(&self) -> u64 {
        let rows = self.counts.len();
        let cols = self.counts.first().map_or(0, Vec::len);
        let size = rows.max(cols);
        if size == 0 {
            return 0;
        }
        let mut cost = vec![vec![0i64; size]; size];
        for (i, r) in self.counts.iter().enumerate() {
            for (j, &c) in r.iter().enumerate() {
                cost[i][j] = -(c as i64);
            }
        }
        let assignment = hungarian(&cost);
        assignment
            .iter()
            .enumerate()
            .filter(|&(i, &j)| i < rows && j < cols)
            .map(|(i, &j)| self.counts[i][j])
            .sum()
    }

    pub fn accuracy(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.max_matching() as f64 / self.n as f64
    }
}

/// Minimum-cost perfect matching on a square cost matrix (Kuhn–Munkres with
/// potentials, O(n³)). Returns, for each row, its matched column.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based potentials; column 0 is a virtual start
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        if row_of_col[j] > 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Fraction of samples correctly labeled under the best one-to-one mapping
/// of predicted clusters onto true classes.
pub fn clustering_accuracy(pred: &LabelVector, truth: &LabelVector) -> Result<f64, MetricsError> {
    if pred.is_empty() && truth.is_empty() {
        return Err(MetricsError::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(ContingencyTable::new(pred, truth)?.accuracy())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNormalization {
    /// `I / sqrt(H(pred)·H(truth))`
    #[default]
    Geometric,
    /// `2I / (H(pred) + H(truth))`
    Arithmetic,
}

fn entropy(sizes: &[u64], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// NMI with natural-log entropies and geometric-mean normalization.
pub fn nmi(pred: &LabelVector, truth: &LabelVector) -> Result<f64, MetricsError> {
    nmi_with(pred, truth, NmiNormalization::Geometric)
}

/// When either partition has zero entropy the score is 1 if both do (the
/// partitions coincide) and 0 otherwise.
pub fn nmi_with(
    pred: &LabelVector,
    truth: &LabelVector,
    normalization: NmiNormalization,
) -> Result<f64, MetricsError> {
    if pred.is_empty() && truth.is_empty() {
        return Err(MetricsError::TooFewSamples { needed: 1, got: 0 });
    }
    let table = ContingencyTable::new(pred, truth)?;
    let n = table.n as f64;
    let a = table.pred_sizes();
    let b = table.truth_sizes();
    let hp = entropy(&a, n);
    let ht = entropy(&b, n);
    if hp == 0.0 || ht == 0.0 {
        return Ok(if hp == 0.0 && ht == 0.0 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            mi += c / n * (n * c / (a[i] as f64 * b[j] as f64)).ln();
        }
    }
    let denom = match normalization {
        NmiNormalization::Geometric => (hp * ht).sqrt(),
        NmiNormalization::Arithmetic => 0.5 * (hp + ht),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[inline]
fn pairs(c: u64) -> i128 {
    let c = c as i128;
    c * (c - 1) / 2
}

/// Adjusted Rand index from pair counts:
/// `(index − expected) / (max − expected)`, evaluated in integer arithmetic
/// up to the final division. Defined as 1 when `max == expected`.
pub fn ari(pred: &LabelVector, truth: &LabelVector) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.len() < 2 {
        return Err(MetricsError::TooFewSamples {
            needed: 2,
            got: pred.len(),
        });
    }
    let table = ContingencyTable::new(pred, truth)?;
    let index: i128 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: i128 = table.pred_sizes().into_iter().map(pairs).sum();
    let b: i128 = table.truth_sizes().into_iter().map(pairs).sum();
    Ok(ari_from_pair_counts(index, a, b, pairs(table.n)))
}

/// Shared closed form given the four pair counts: pairs together in both,
/// together in pred, together in truth, and all pairs.
pub fn ari_from_pair_counts(index: i128, pred_pairs: i128, truth_pairs: i128, total: i128) -> f64 {
    let num = 2 * index * total - 2 * pred_pairs * truth_pairs;
    let den = (pred_pairs + truth_pairs) * total - 2 * pred_pairs * truth_pairs;
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// The accuracy/NMI/ARI triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn evaluate(pred: &LabelVector, truth: &LabelVector) -> Result<Scores, MetricsError> {
    evaluate_with(pred, truth, NmiNormalization::Geometric)
}

pub fn evaluate_with(
    pred: &LabelVector,
    truth: &LabelVector,
    normalization: NmiNormalization,
) -> Result<Scores, MetricsError> {
    Ok(Scores {
        acc: clustering_accuracy(pred, truth)?,
        nmi: nmi_with(pred, truth, normalization)?,
        ari: ari(pred, truth)?,
    })
}
