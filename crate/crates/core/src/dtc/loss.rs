use serde::{Deserialize, Serialize};

use super::DtcError;
use crate::model::ProbabilityMatrix;

/// Lower clamp applied to probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

fn check_shapes(a: &ProbabilityMatrix, b: &ProbabilityMatrix) -> Result<(), DtcError> {
    if a.n_samples() != b.n_samples() || a.n_clusters() != b.n_clusters() {
        return Err(DtcError::Shape(format!(
            "{}x{} vs {}x{}",
            a.n_samples(),
            a.n_clusters(),
            b.n_samples(),
            b.n_clusters()
        )));
    }
    Ok(())
}

/// `(1/N) Σ_i Σ_k q log(q/p)`, skipping zero-target terms.
pub fn kl_loss(q: &ProbabilityMatrix, p: &ProbabilityMatrix) -> Result<f64, DtcError> {
    check_shapes(q, p)?;
    let mut total = 0.0;
    for (&qv, &pv) in q.matrix().as_slice().iter().zip(p.matrix().as_slice()) {
        if qv > 0.0 {
            total += qv * (qv.ln() - pv.max(LOG_FLOOR).ln());
        }
    }
    Ok(total / q.n_samples() as f64)
}

/// Per-element penalty in the consistency term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsistencyNorm {
    /// `(p − p')²`
    #[default]
    Squared,
    /// `|p − p'|`
    Absolute,
}

impl ConsistencyNorm {
    #[inline]
    pub(crate) fn penalty(self, diff: f64) -> f64 {
        match self {
            ConsistencyNorm::Squared => diff * diff,
            ConsistencyNorm::Absolute => diff.abs(),
        }
    }

    /// Derivative of the penalty with respect to `diff`.
    #[inline]
    pub(crate) fn slope(self, diff: f64) -> f64 {
        match self {
            ConsistencyNorm::Squared => 2.0 * diff,
            ConsistencyNorm::Absolute => {
                if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `ω · (1/(N·K)) Σ_i Σ_k (p − p')²`.
pub fn consistency_loss(
    p: &ProbabilityMatrix,
    p_prime: &ProbabilityMatrix,
    omega: f64,
) -> Result<f64, DtcError> {
    consistency_loss_with(p, p_prime, omega, ConsistencyNorm::Squared)
}

pub fn consistency_loss_with(
    p: &ProbabilityMatrix,
    p_prime: &ProbabilityMatrix,
    omega: f64,
    norm: ConsistencyNorm,
) -> Result<f64, DtcError> {
    check_shapes(p, p_prime)?;
    if omega == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = p
        .matrix()
        .as_slice()
        .iter()
        .zip(p_prime.matrix().as_slice())
        .map(|(a, b)| norm.penalty(a - b))
        .sum();
    Ok(omega * sum / (p.n_samples() * p.n_clusters()) as f64)
}

/// Gaussian ramp `exp(−5 (1 − t/T)²)` for `t < T`, then 1.
pub fn ramp_up(t: usize, ramp_length: usize) -> f64 {
    if ramp_length == 0 || t >= ramp_length {
        return 1.0;
    }
    let phase = 1.0 - t as f64 / ramp_length as f64;
    (-5.0 * phase * phase).exp()
}
