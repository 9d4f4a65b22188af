//! Linear embedding stand-in for a fine-tuned extractor: PCA folded into a
//! trainable projection, and k-means initialization of cluster centers.

mod kmeans;
mod pca;
mod projection;

pub use kmeans::{kmeans, KMeansResult};
pub use pca::{pca_fit, PcaModel};
pub use projection::{init_projection, projection_gradients, ProjectionGradients};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("target dimension {requested} exceeds min(N-1, D) = {max}")]
    TargetDim { requested: usize, max: usize },
    #[error("k = {k} exceeds the number of points ({n})")]
    TooManyClusters { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("max_iters must be at least 1")]
    ZeroIterations,
    #[error(transparent)]
    Model(#[from] ModelError),
}
