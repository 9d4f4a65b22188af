use super::assign::sq_dist;
use super::{ConsistencyNorm, DtcError};
use crate::model::{Matrix, ProbabilityMatrix};

/// Loss gradients with respect to embedded points and cluster centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGradients {
    /// N×K'
    pub z: Matrix,
    /// K×K'
    pub centers: Matrix,
}

impl ClusterGradients {
    fn zeros(n: usize, k: usize, dim: usize) -> Self {
        Self {
            z: Matrix::zeros(n, dim),
            centers: Matrix::zeros(k, dim),
        }
    }
}

fn check(z: &Matrix, centers: &Matrix, p: &ProbabilityMatrix) -> Result<(), DtcError> {
    if z.cols() != centers.cols() || p.n_samples() != z.rows() || p.n_clusters() != centers.rows()
    {
        return Err(DtcError::Shape(format!(
            "z {}x{}, centers {}x{}, probabilities {}x{}",
            z.rows(),
            z.cols(),
            centers.rows(),
            centers.cols(),
            p.n_samples(),
            p.n_clusters()
        )));
    }
    Ok(())
}

/// Accumulates gradients given `∂L/∂ log u_ik`, where `u_ik` is the
/// unnormalized kernel value of point `i` at center `k`.
///
/// `∂ log u/∂ d² = −(α+1) / (2(α + d²))` and `∂ d²/∂ z_i = 2(z_i − μ_k)`.
fn backprop_kernel(
    z: &Matrix,
    centers: &Matrix,
    alpha: f64,
    dlog_kernel: &Matrix,
    out: &mut ClusterGradients,
) {
    let dim = z.cols();
    let mut diff = vec![0.0; dim];
    for i in 0..z.rows() {
        let zi = z.row(i);
        for (k, mu) in centers.iter_rows().enumerate() {
            let g = dlog_kernel.get(i, k);
            if g == 0.0 {
                continue;
            }
            let d2 = sq_dist(zi, mu);
            let coef = -g * (alpha + 1.0) / (alpha + d2);
            for ((d, a), b) in diff.iter_mut().zip(zi).zip(mu) {
                *d = coef * (a - b);
            }
            for (gz, d) in out.z.row_mut(i).iter_mut().zip(&diff) {
                *gz += d;
            }
            for (gc, d) in out.centers.row_mut(k).iter_mut().zip(&diff) {
                *gc -= d;
            }
        }
    }
}

/// Pulls `∂L/∂p` back through row normalization:
/// `∂L/∂ log u_ij = p_ij (G_ij − Σ_k G_ik p_ik)`.
fn through_normalization(p: &ProbabilityMatrix, grad_p: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(p.n_samples(), p.n_clusters());
    for i in 0..p.n_samples() {
        let pi = p.row(i);
        let gi = grad_p.row(i);
        let inner: f64 = pi.iter().zip(gi).map(|(a, b)| a * b).sum();
        for ((o, &pv), &gv) in out.row_mut(i).iter_mut().zip(pi).zip(gi) {
            *o = pv * (gv - inner);
        }
    }
    out
}

/// Exact gradients of `KL(q ‖ p)` with `q` held fixed and
/// `p = soft_assign(z, centers, alpha)`.
///
/// Through the normalization, `∂L/∂ log u_ik = (p_ik − q_ik)/N`.
pub fn dec_gradients(
    z: &Matrix,
    centers: &Matrix,
    alpha: f64,
    q: &ProbabilityMatrix,
) -> Result<ClusterGradients, DtcError> {
    let p = super::soft_assign(z, centers, alpha)?;
    check(z, centers, q)?;
    Ok(dec_gradients_given(z, centers, alpha, &p, q))
}

pub(crate) fn dec_gradients_given(
    z: &Matrix,
    centers: &Matrix,
    alpha: f64,
    p: &ProbabilityMatrix,
    q: &ProbabilityMatrix,
) -> ClusterGradients {
    let n = z.rows() as f64;
    let mut dlog = Matrix::zeros(p.n_samples(), p.n_clusters());
    for ((d, &pv), &qv) in dlog
        .as_mut_slice()
        .iter_mut()
        .zip(p.matrix().as_slice())
        .zip(q.matrix().as_slice())
    {
        *d = (pv - qv) / n;
    }
    let mut out = ClusterGradients::zeros(z.rows(), centers.rows(), z.cols());
    backprop_kernel(z, centers, alpha, &dlog, &mut out);
    out
}

/// `∂L₂/∂p` for `L₂ = ω/(NK) Σ penalty(p − p')`; the gradient with respect to
/// `p'` is the negation. Returns `None` when it vanishes identically.
pub(crate) fn consistency_grad_p(
    p: &ProbabilityMatrix,
    p_prime: &ProbabilityMatrix,
    omega: f64,
    norm: ConsistencyNorm,
) -> Option<Matrix> {
    if omega == 0.0 {
        return None;
    }
    let scale = omega / (p.n_samples() * p.n_clusters()) as f64;
    let mut g = Matrix::zeros(p.n_samples(), p.n_clusters());
    let mut any = false;
    for ((gv, &a), &b) in g
        .as_mut_slice()
        .iter_mut()
        .zip(p.matrix().as_slice())
        .zip(p_prime.matrix().as_slice())
    {
        *gv = scale * norm.slope(a - b);
        any |= *gv != 0.0;
    }
    any.then_some(g)
}

/// Gradients of the consistency term between `p = soft_assign(z)` and
/// `p' = soft_assign(z_prime)`, both sharing `centers`.
///
/// Returns gradients for the main branch (z and centers) and for the
/// transformed branch (z' and centers). With `z_prime = None` the second
/// prediction is a constant target and only the main branch is returned.
pub fn consistency_gradients(
    z: &Matrix,
    centers: &Matrix,
    alpha: f64,
    p_prime_source: ConsistencyTarget<'_>,
    omega: f64,
    norm: ConsistencyNorm,
) -> Result<(ClusterGradients, Option<ClusterGradients>), DtcError> {
    let p = super::soft_assign(z, centers, alpha)?;
    let (p_prime, z_prime) = match p_prime_source {
        ConsistencyTarget::Fixed(t) => (t.clone(), None),
        ConsistencyTarget::Transformed(zp) => (super::soft_assign(zp, centers, alpha)?, Some(zp)),
    };
    check(z, centers, &p_prime)?;
    Ok(
        consistency_gradients_given(z, z_prime, centers, alpha, &p, &p_prime, omega, norm)
            .unwrap_or_else(|| {
                let main = ClusterGradients::zeros(z.rows(), centers.rows(), z.cols());
                let other = z_prime
                    .map(|zp| ClusterGradients::zeros(zp.rows(), centers.rows(), zp.cols()));
                (main, other)
            }),
    )
}

/// Where the second prediction in the consistency term comes from.
#[derive(Debug, Clone, Copy)]
pub enum ConsistencyTarget<'a> {
    /// A constant distribution such as a temporal ensemble.
    Fixed(&'a ProbabilityMatrix),
    /// Embedded transformed counterparts, differentiated like `z`.
    Transformed(&'a Matrix),
}

/// `None` when the consistency gradient vanishes identically, as it does
/// when both predictions coincide or the weight is zero.
#[allow(clippy::too_many_arguments)]
pub(crate) fn consistency_gradients_given(
    z: &Matrix,
    z_prime: Option<&Matrix>,
    centers: &Matrix,
    alpha: f64,
    p: &ProbabilityMatrix,
    p_prime: &ProbabilityMatrix,
    omega: f64,
    norm: ConsistencyNorm,
) -> Option<(ClusterGradients, Option<ClusterGradients>)> {
    let mut g = consistency_grad_p(p, p_prime, omega, norm)?;
    let mut main = ClusterGradients::zeros(z.rows(), centers.rows(), z.cols());
    backprop_kernel(z, centers, alpha, &through_normalization(p, &g), &mut main);
    let other = z_prime.map(|zp| {
        g.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        let mut out = ClusterGradients::zeros(zp.rows(), centers.rows(), zp.cols());
        backprop_kernel(zp, centers, alpha, &through_normalization(p_prime, &g), &mut out);
        out
    });
    Some((main, other))
}
