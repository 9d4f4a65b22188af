//! Attention-preprocessed deep transfer clustering.
//!
//! GrabCut extracts a region of interest per image; precomputed features
//! are then embedded by a PCA-initialized linear projection and clustered
//! with a KL self-training objective, optionally regularized by consistency
//! with transformed inputs or with a temporal ensemble of past predictions.

pub mod dtc;
pub mod embedding;
pub mod grabcut;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synthetic;
