//! Deep embedded / transfer clustering objectives and training loops.
//!
//! Soft assignments use a Student's t kernel around each cluster center.
//! Training minimizes `KL(q ‖ p)` against a periodically refreshed,
//! sharpened target `q`, optionally plus a ramped consistency term between
//! `p` and either a transformed counterpart's prediction (`Pi`) or a
//! temporal ensemble of past predictions (`Tep`).

mod assign;
mod ensemble;
mod grad;
mod loss;
mod train;

pub use assign::{normalize_rows, predict, soft_assign, target_distribution};
pub use ensemble::{ema_update, EnsembleState};
pub use grad::{consistency_gradients, dec_gradients, ClusterGradients, ConsistencyTarget};
pub use loss::{consistency_loss, consistency_loss_with, kl_loss, ramp_up, ConsistencyNorm, LOG_FLOOR};
pub use train::{jitter_features, train, TrainConfig, TrainOutcome, Variant};

use thiserror::Error;

use crate::embedding::EmbeddingError;
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DtcError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("beta must lie in [0, 1) (got {0})")]
    Beta(f64),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("the Pi variant needs transformed features")]
    MissingTransform,
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}
