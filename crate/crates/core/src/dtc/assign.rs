use super::DtcError;
use crate::model::{ClusterState, FeatureMatrix, LabelVector, Matrix, ProbabilityMatrix};

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Divides every row by its sum. Rows summing to zero are left as zeros.
pub fn normalize_rows(m: &mut Matrix) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
}

/// Log of the unnormalized Student's t kernel,
/// `−(α+1)/2 · ln(1 + ‖z − μ‖²/α)`.
#[inline]
pub(crate) fn log_kernel(d2: f64, alpha: f64) -> f64 {
    -0.5 * (alpha + 1.0) * (d2 / alpha).ln_1p()
}

/// Soft assignment of each embedded point to each center,
/// `p(k|i) ∝ (1 + ‖z_i − μ_k‖²/α)^(−(α+1)/2)`.
///
/// Normalization runs in log space (shifted by the row maximum) so distant
/// points do not underflow to an all-zero row.
pub fn soft_assign(z: &Matrix, centers: &Matrix, alpha: f64) -> Result<ProbabilityMatrix, DtcError> {
    if z.cols() != centers.cols() {
        return Err(DtcError::Shape(format!(
            "points are {}-dimensional, centers {}-dimensional",
            z.cols(),
            centers.cols()
        )));
    }
    if centers.rows() == 0 {
        return Err(DtcError::Shape("no cluster centers".into()));
    }
    let k = centers.rows();
    let mut p = Matrix::zeros(z.rows(), k);
    for i in 0..z.rows() {
        let zi = z.row(i);
        let row = p.row_mut(i);
        for (j, c) in centers.iter_rows().enumerate() {
            row[j] = log_kernel(sq_dist(zi, c), alpha);
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = (*v - max).exp());
    }
    normalize_rows(&mut p);
    Ok(ProbabilityMatrix::from_normalized(p))
}

/// Sharpened self-training target, `q(k|i) ∝ p(k|i)² / Σ_i p(k|i)`.
///
/// Clusters with zero total mass contribute a zero column.
pub fn target_distribution(p: &ProbabilityMatrix) -> ProbabilityMatrix {
    let m = p.matrix();
    let k = m.cols();
    let mut freq = vec![0.0; k];
    for row in m.iter_rows() {
        for (f, v) in freq.iter_mut().zip(row) {
            *f += v;
        }
    }
    let mut q = Matrix::zeros(m.rows(), k);
    for i in 0..m.rows() {
        for (j, (&v, &f)) in m.row(i).iter().zip(&freq).enumerate() {
            if f > 0.0 {
                q.set(i, j, v * v / f);
            }
        }
    }
    normalize_rows(&mut q);
    ProbabilityMatrix::from_normalized(q)
}

/// Hard assignment by largest soft-assignment probability (lowest index on
/// ties), together with the probabilities themselves.
pub fn predict(
    features: &FeatureMatrix,
    state: &ClusterState,
) -> Result<(LabelVector, ProbabilityMatrix), DtcError> {
    let z = state.project(features)?;
    let p = soft_assign(&z, state.centers(), state.alpha())?;
    Ok((p.argmax(), p))
}
