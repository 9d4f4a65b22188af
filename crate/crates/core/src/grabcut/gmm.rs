use nalgebra::{Matrix3, Vector3};

use super::{GrabcutError, Rgb};
use crate::embedding::kmeans;
use crate::model::{FeatureMatrix, Matrix};

/// Added to every covariance diagonal, in squared RGB units.
pub const COVARIANCE_EPSILON: f64 = 1e-3;

const KMEANS_ITERS: usize = 20;
const REFINE_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: [f64; 3],
    /// Regularized covariance: sample covariance plus `ε·I`.
    pub covariance: [[f64; 3]; 3],
    inverse: Matrix3<f64>,
    log_det: f64,
}

impl GaussianComponent {
    /// Negative log-likelihood up to the shared `3/2·ln 2π`, plus the
    /// `ε·tr(Σ⁻¹)/2` term that makes the regularized covariance the exact
    /// minimizer of the summed cost over its members.
    pub fn cost(&self, x: [f64; 3]) -> f64 {
        let d = Vector3::new(x[0] - self.mean[0], x[1] - self.mean[1], x[2] - self.mean[2]);
        let maha = d.dot(&(self.inverse * d));
        -self.weight.ln()
            + 0.5 * self.log_det
            + 0.5 * maha
            + 0.5 * COVARIANCE_EPSILON * self.inverse.trace()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorGmm {
    components: Vec<GaussianComponent>,
}

impl ColorGmm {
    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Index and cost of the cheapest component; ties go to the lower index.
    pub fn assign(&self, x: [f64; 3]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, c) in self.components.iter().enumerate() {
            let v = c.cost(x);
            if v < best.1 {
                best = (k, v);
            }
        }
        best
    }

    pub fn cost(&self, x: [f64; 3]) -> f64 {
        self.assign(x).1
    }
}

pub(crate) fn to_f64(p: Rgb) -> [f64; 3] {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

/// Closed-form update from hard assignments: weights are member fractions,
/// means and covariances are member statistics. Empty components are dropped.
pub fn learn_gmm(
    pixels: &[[f64; 3]],
    assignment: &[usize],
    component_count: usize,
) -> Result<ColorGmm, GrabcutError> {
    if pixels.is_empty() {
        return Err(GrabcutError::InsufficientSamples { needed: 1, got: 0 });
    }
    if pixels.len() != assignment.len() {
        return Err(GrabcutError::Dimensions(format!(
            "{} pixels but {} assignments",
            pixels.len(),
            assignment.len()
        )));
    }
    let mut count = vec![0usize; component_count];
    let mut sum = vec![[0.0f64; 3]; component_count];
    for (x, &k) in pixels.iter().zip(assignment) {
        count[k] += 1;
        for c in 0..3 {
            sum[k][c] += x[c];
        }
    }
    let mut scatter = vec![[[0.0f64; 3]; 3]; component_count];
    let means: Vec<[f64; 3]> = sum
        .iter()
        .zip(&count)
        .map(|(s, &n)| {
            let n = n.max(1) as f64;
            [s[0] / n, s[1] / n, s[2] / n]
        })
        .collect();
    for (x, &k) in pixels.iter().zip(assignment) {
        let m = means[k];
        let d = [x[0] - m[0], x[1] - m[1], x[2] - m[2]];
        for r in 0..3 {
            for c in 0..3 {
                scatter[k][r][c] += d[r] * d[c];
            }
        }
    }
    let total = pixels.len() as f64;
    let mut components = Vec::with_capacity(component_count);
    for k in 0..component_count {
        if count[k] == 0 {
            continue;
        }
        let n = count[k] as f64;
        let mut cov = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] = scatter[k][r][c] / n;
            }
            cov[r][r] += COVARIANCE_EPSILON;
        }
        let m = Matrix3::from_fn(|r, c| cov[r][c]);
        let det = m.determinant();
        let inverse = m.try_inverse().filter(|_| det > 0.0).ok_or_else(|| {
            GrabcutError::Params(format!("covariance of component {k} is not positive definite"))
        })?;
        components.push(GaussianComponent {
            weight: n / total,
            mean: means[k],
            covariance: cov,
            inverse,
            log_det: det.ln(),
        });
    }
    Ok(ColorGmm { components })
}

/// k-means initialization, then assign/learn rounds until the hard
/// assignment stops changing. Deterministic for a given seed.
pub fn fit_gmm(pixels: &[Rgb], component_count: usize, seed: u64) -> Result<ColorGmm, GrabcutError> {
    if component_count == 0 {
        return Err(GrabcutError::Params("component_count must be at least 1".into()));
    }
    if pixels.len() < component_count {
        return Err(GrabcutError::InsufficientSamples {
            needed: component_count,
            got: pixels.len(),
        });
    }
    let xs: Vec<[f64; 3]> = pixels.iter().map(|&p| to_f64(p)).collect();
    let data = Matrix::new(xs.len(), 3, xs.iter().flatten().copied().collect())
        .and_then(FeatureMatrix::new)
        .map_err(|e| GrabcutError::Params(e.to_string()))?;
    let km = kmeans(&data, component_count, seed, KMEANS_ITERS)
        .map_err(|e| GrabcutError::Params(e.to_string()))?;
    let mut assignment = km.assignment.as_slice().to_vec();
    let mut gmm = learn_gmm(&xs, &assignment, component_count)?;
    for _ in 0..REFINE_ROUNDS {
        let next: Vec<usize> = xs.iter().map(|&x| gmm.assign(x).0).collect();
        if next == assignment {
            break;
        }
        gmm = learn_gmm(&xs, &next, gmm.components.len())?;
        assignment = next;
    }
    Ok(gmm)
}
