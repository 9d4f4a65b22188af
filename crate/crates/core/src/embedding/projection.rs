use super::{EmbeddingError, PcaModel};
use crate::model::{ClusterState, FeatureMatrix, Matrix, ModelError};

/// Folds a fitted PCA into linear-layer parameters.
///
/// Returns `(weights, offset)` with `weights = components` and
/// `offset = mean · components`, so that `x · weights − offset` equals
/// `(x − mean) · components`.
pub fn init_projection(p: &PcaModel) -> (Matrix, Vec<f64>) {
    let weights = p.components.clone();
    let mut offset = vec![0.0; weights.cols()];
    for (r, &m) in p.mean.iter().enumerate() {
        for (o, &w) in offset.iter_mut().zip(weights.row(r)) {
            *o += m * w;
        }
    }
    (weights, offset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGradients {
    /// D×K', same layout as the projection weights.
    pub weights: Matrix,
    pub offset: Vec<f64>,
}

/// Chain rule through `z = x · W − b` given `upstream = ∂L/∂z`.
pub fn projection_gradients(
    x: &FeatureMatrix,
    state: &ClusterState,
    upstream: &Matrix,
) -> Result<ProjectionGradients, EmbeddingError> {
    let n = x.n_samples();
    let d = x.n_features();
    let e = state.embed_dim();
    if d != state.input_dim() || upstream.rows() != n || upstream.cols() != e {
        return Err(ModelError::Shape {
            what: format!(
                "features {n}x{d}, upstream {}x{}, projection {}x{e}",
                upstream.rows(),
                upstream.cols(),
                state.input_dim()
            ),
        }
        .into());
    }
    let mut weights = Matrix::zeros(d, e);
    let mut offset = vec![0.0; e];
    for i in 0..n {
        let g = upstream.row(i);
        for (o, gv) in offset.iter_mut().zip(g) {
            *o -= gv;
        }
        for (a, &xa) in x.row(i).iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            for (w, gv) in weights.row_mut(a).iter_mut().zip(g) {
                *w += xa * gv;
            }
        }
    }
    Ok(ProjectionGradients { weights, offset })
}
