use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::EmbeddingError;
use crate::model::{FeatureMatrix, Matrix};

/// Principal subspace of a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Per-feature sample mean, length D.
    pub mean: Vec<f64>,
    /// D×K' matrix with orthonormal columns.
    pub components: Matrix,
    /// Variance captured by each component, descending.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.cols()
    }

    /// `(x − mean) · components`.
    pub fn transform(&self, x: &FeatureMatrix) -> Matrix {
        let mut centered = x.matrix().clone();
        for r in 0..centered.rows() {
            for (v, m) in centered.row_mut(r).iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        centered
            .matmul(&self.components)
            .expect("feature width checked by caller")
    }

    /// Maps embedded coordinates back to feature space.
    pub fn reconstruct(&self, z: &Matrix) -> Matrix {
        let mut x = z
            .matmul(&self.components.transpose())
            .expect("embedded width matches component count");
        for r in 0..x.rows() {
            for (v, m) in x.row_mut(r).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        x
    }
}

/// Fits PCA by eigendecomposition of the sample covariance (N − 1
/// denominator). Each component's sign is fixed so that its largest-magnitude
/// entry is positive.
pub fn pca_fit(x: &FeatureMatrix, target_dim: usize) -> Result<PcaModel, EmbeddingError> {
    let n = x.n_samples();
    let d = x.n_features();
    let max = (n.saturating_sub(1)).min(d);
    if target_dim == 0 || target_dim > max {
        return Err(EmbeddingError::TargetDim {
            requested: target_dim,
            max,
        });
    }

    let mut mean = vec![0.0; d];
    for row in x.matrix().iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in x.matrix().iter_rows() {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    // stable sort keeps the solver's order among equal eigenvalues
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut components = Matrix::zeros(d, target_dim);
    let mut explained_variance = Vec::with_capacity(target_dim);
    for (c, &idx) in order.iter().take(target_dim).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let mut pivot = 0;
        for r in 1..d {
            if v[r].abs() > v[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            components.set(r, c, sign * v[r]);
        }
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        FeatureMatrix::from_rows(&rows).unwrap()
    }

    /// Cyclic Jacobi eigensolver, used only as an independent oracle.
    fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v = vec![vec![0.0; n]; n];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let vkp = row[p];
                        let vkq = row[q];
                        row[p] = c * vkp - s * vkq;
                        row[q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let vals = (0..n).map(|i| a[i][i]).collect();
        let vecs = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
        (vals, vecs)
    }

    #[test]
    fn components_match_jacobi_oracle_up_to_sign() {
        let x = random_matrix(50, 8, 11);
        let model = pca_fit(&x, 3).unwrap();

        let n = 50.0;
        let mean: Vec<f64> = (0..8)
            .map(|j| x.matrix().iter_rows().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let cov: Vec<Vec<f64>> = (0..8)
            .map(|a| {
                (0..8)
                    .map(|b| {
                        x.matrix()
                            .iter_rows()
                            .map(|r| (r[a] - mean[a]) * (r[b] - mean[b]))
                            .sum::<f64>()
                            / (n - 1.0)
                    })
                    .collect()
            })
            .collect();
        let (vals, vecs) = jacobi_eigen(cov);
        let mut idx: Vec<usize> = (0..8).collect();
        idx.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap());

        for c in 0..3 {
            let oracle = &vecs[idx[c]];
            assert!((model.explained_variance[c] - vals[idx[c]]).abs() < 1e-9);
            let dot: f64 = (0..8).map(|r| model.components.get(r, c) * oracle[r]).sum();
            let sign = dot.signum();
            for r in 0..8 {
                assert!(
                    (model.components.get(r, c) - sign * oracle[r]).abs() < 1e-6,
                    "component {c} row {r}"
                );
            }
        }
    }

    #[test]
    fn planar_data_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = [1.0, 2.0, 0.0, -1.0, 0.5];
        let v = [0.0, 1.0, 1.0, 1.0, -2.0];
        let offset = [3.0, -1.0, 2.0, 0.0, 7.0];
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let a: f64 = rng.random_range(-5.0..5.0);
                let b: f64 = rng.random_range(-5.0..5.0);
                (0..5).map(|j| offset[j] + a * u[j] + b * v[j]).collect()
            })
            .collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let model = pca_fit(&x, 2).unwrap();
        let back = model.reconstruct(&model.transform(&x));
        for (a, b) in back.as_slice().iter().zip(x.matrix().as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn full_rank_captures_total_variance() {
        let x = random_matrix(40, 6, 5);
        let model = pca_fit(&x, 6).unwrap();
        let total: f64 = (0..6)
            .map(|j| {
                let col: Vec<f64> = x.matrix().iter_rows().map(|r| r[j]).collect();
                let m = col.iter().sum::<f64>() / 40.0;
                col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 39.0
            })
            .sum();
        let explained: f64 = model.explained_variance.iter().sum();
        assert!((total - explained).abs() < 1e-8);
        let back = model.reconstruct(&model.transform(&x));
        for (a, b) in back.as_slice().iter().zip(x.matrix().as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn components_orthonormal_and_sorted() {
        let x = random_matrix(25, 7, 9);
        let model = pca_fit(&x, 4).unwrap();
        let gram = model.components.transpose().matmul(&model.components).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - expect).abs() < 1e-8);
            }
        }
        assert!(model
            .explained_variance
            .windows(2)
            .all(|w| w[0] >= w[1]));
        for c in 0..4 {
            let col: Vec<f64> = (0..7).map(|r| model.components.get(r, c)).collect();
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn target_dim_too_large() {
        let x = random_matrix(4, 10, 1);
        assert_eq!(
            pca_fit(&x, 4),
            Err(EmbeddingError::TargetDim {
                requested: 4,
                max: 3
            })
        );
        assert!(pca_fit(&x, 0).is_err());
    }
}
