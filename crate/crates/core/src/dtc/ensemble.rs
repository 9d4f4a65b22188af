use serde::{Deserialize, Serialize};

use super::{normalize_rows, DtcError};
use crate::model::{Matrix, ProbabilityMatrix};

/// Zero-initialized exponential moving average of per-epoch predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    accumulated: Matrix,
    beta: f64,
    step: u64,
}

impl EnsembleState {
    pub fn new(n_samples: usize, n_clusters: usize, beta: f64) -> Result<Self, DtcError> {
        if !(0.0..1.0).contains(&beta) {
            return Err(DtcError::Beta(beta));
        }
        Ok(Self {
            accumulated: Matrix::zeros(n_samples, n_clusters),
            beta,
            step: 0,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Raw accumulator; rows sum to `1 − β^t`, not 1.
    pub fn accumulated(&self) -> &Matrix {
        &self.accumulated
    }
}

/// Folds the step-`t` prediction into the average and returns the
/// bias-corrected ensemble `P^t / (1 − β^t)`, rows renormalized to scrub
/// rounding drift.
///
/// At `t = 1` the correction cancels, and the incoming prediction is
/// returned bit-for-bit.
pub fn ema_update(
    state: &EnsembleState,
    p_t: &ProbabilityMatrix,
) -> Result<(EnsembleState, ProbabilityMatrix), DtcError> {
    let beta = state.beta;
    if !(0.0..1.0).contains(&beta) {
        return Err(DtcError::Beta(beta));
    }
    if p_t.n_samples() != state.accumulated.rows() || p_t.n_clusters() != state.accumulated.cols()
    {
        return Err(DtcError::Shape(format!(
            "ensemble is {}x{}, prediction {}x{}",
            state.accumulated.rows(),
            state.accumulated.cols(),
            p_t.n_samples(),
            p_t.n_clusters()
        )));
    }
    let step = state.step + 1;
    let mut accumulated = state.accumulated.clone();
    for (acc, &p) in accumulated
        .as_mut_slice()
        .iter_mut()
        .zip(p_t.matrix().as_slice())
    {
        *acc = beta * *acc + (1.0 - beta) * p;
    }

    let smoothed = if step == 1 {
        p_t.matrix().clone()
    } else {
        let exponent = i32::try_from(step).unwrap_or(i32::MAX);
        let correction = 1.0 - beta.powi(exponent);
        let mut s = accumulated.clone();
        s.as_mut_slice().iter_mut().for_each(|v| *v /= correction);
        normalize_rows(&mut s);
        s
    };

    Ok((
        EnsembleState {
            accumulated,
            beta,
            step,
        },
        ProbabilityMatrix::from_normalized(smoothed),
    ))
}
