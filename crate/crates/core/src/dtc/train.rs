use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::grad::{consistency_gradients_given, dec_gradients_given, ClusterGradients};
use super::{
    consistency_loss_with, ema_update, kl_loss, predict, ramp_up, soft_assign,
    target_distribution, ConsistencyNorm, DtcError, EnsembleState,
};
use crate::embedding::projection_gradients;
use crate::model::{ClusterState, FeatureMatrix, LabelVector, LossBreakdown, Matrix, ProbabilityMatrix};

/// Which objective to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// KL loss only.
    Baseline,
    /// KL loss plus consistency with a transformed counterpart.
    #[serde(rename = "PI")]
    Pi,
    /// KL loss plus consistency with the temporal ensemble prediction.
    #[serde(rename = "TEP")]
    Tep,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "Baseline",
            Variant::Pi => "PI",
            Variant::Tep => "TEP",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Variant::Baseline),
            "pi" => Ok(Variant::Pi),
            "tep" => Ok(Variant::Tep),
            other => Err(format!("unknown variant '{other}' (expected baseline, pi or tep)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    /// Epochs over which the consistency weight ramps from ~0 to 1.
    pub ramp_length: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    /// EMA momentum for the temporal ensemble.
    pub beta: f64,
    /// Refresh the target distribution every this many epochs.
    pub target_update_interval: usize,
    pub seed: u64,
    pub consistency_norm: ConsistencyNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Baseline,
            epochs: 50,
            ramp_length: 50,
            learning_rate: 0.01,
            alpha: 1.0,
            beta: 0.9,
            target_update_interval: 1,
            seed: 0,
            consistency_norm: ConsistencyNorm::Squared,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DtcError> {
        let bad = |m: String| Err(DtcError::Config(m));
        if self.ramp_length == 0 {
            return bad("ramp_length must be at least 1".into());
        }
        if self.epochs > 0 && self.ramp_length > self.epochs {
            return bad(format!(
                "ramp_length {} exceeds epochs {}",
                self.ramp_length, self.epochs
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive (got {})", self.learning_rate));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive (got {})", self.alpha));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(DtcError::Beta(self.beta));
        }
        if self.target_update_interval == 0 {
            return bad("target_update_interval must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: ClusterState,
    pub assignment: LabelVector,
    pub history: Vec<LossBreakdown>,
}

/// Seeded Gaussian jitter of every feature, a stand-in for features
/// re-extracted from augmented images.
pub fn jitter_features(x: &FeatureMatrix, sigma: f64, seed: u64) -> Result<FeatureMatrix, DtcError> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| DtcError::Config(format!("jitter sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = x.matrix().clone();
    m.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v += normal.sample(&mut rng));
    Ok(FeatureMatrix::new(m)?)
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}

/// Full-batch gradient descent on the chosen objective.
///
/// Each epoch: embed, soft-assign, refresh `q` on schedule, evaluate the
/// loss, then take one step on centers and projection parameters. The
/// temporal ensemble is fed each epoch's prediction after the loss is taken,
/// so epoch `t` is compared against predictions from epochs before it.
pub fn train(
    features: &FeatureMatrix,
    initial: &ClusterState,
    cfg: &TrainConfig,
    transform_features: Option<&FeatureMatrix>,
) -> Result<TrainOutcome, DtcError> {
    cfg.validate()?;
    if features.n_features() != initial.input_dim() {
        return Err(DtcError::Shape(format!(
            "features have {} columns, projection expects {}",
            features.n_features(),
            initial.input_dim()
        )));
    }
    let transformed = match cfg.variant {
        Variant::Pi => {
            let t = transform_features.ok_or(DtcError::MissingTransform)?;
            if t.n_samples() != features.n_samples() || t.n_features() != features.n_features() {
                return Err(DtcError::Shape(format!(
                    "transformed features are {}x{}, features {}x{}",
                    t.n_samples(),
                    t.n_features(),
                    features.n_samples(),
                    features.n_features()
                )));
            }
            Some(t)
        }
        Variant::Baseline | Variant::Tep => None,
    };

    let n = features.n_samples();
    let k = initial.n_clusters();
    let alpha = initial.alpha();
    let mut state = initial.clone();
    let mut ensemble = EnsembleState::new(n, k, cfg.beta)?;
    let mut smoothed: Option<ProbabilityMatrix> = None;
    let mut target: Option<ProbabilityMatrix> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let z = state.project(features)?;
        let p = soft_assign(&z, state.centers(), alpha)?;
        if epoch % cfg.target_update_interval == 0 || target.is_none() {
            target = Some(target_distribution(&p));
        }
        let q = target.as_ref().expect("target set above");
        let l1 = kl_loss(q, &p)?;

        let omega = match cfg.variant {
            Variant::Baseline => 0.0,
            Variant::Pi | Variant::Tep => ramp_up(epoch, cfg.ramp_length),
        };
        let branch = match (cfg.variant, transformed) {
            (Variant::Pi, Some(t)) => {
                let zp = state.project(t)?;
                let pp = soft_assign(&zp, state.centers(), alpha)?;
                Some((Some(zp), pp))
            }
            (Variant::Tep, _) => smoothed.clone().map(|s| (None, s)),
            _ => None,
        };
        let l2 = match &branch {
            Some((_, pp)) => consistency_loss_with(&p, pp, omega, cfg.consistency_norm)?,
            None => 0.0,
        };
        let record = LossBreakdown::new(l1, l2, omega);
        if !record.total.is_finite() {
            return Err(DtcError::Diverged { epoch });
        }
        history.push(record);

        let mut grads = dec_gradients_given(&z, state.centers(), alpha, &p, q);
        let mut transformed_grads: Option<ClusterGradients> = None;
        if let Some((zp, pp)) = &branch {
            if let Some((main, other)) = consistency_gradients_given(
                &z,
                zp.as_ref(),
                state.centers(),
                alpha,
                &p,
                pp,
                omega,
                cfg.consistency_norm,
            ) {
                add_into(grads.z.as_mut_slice(), main.z.as_slice());
                add_into(grads.centers.as_mut_slice(), main.centers.as_slice());
                transformed_grads = other;
            }
        }

        let mut proj = projection_gradients(features, &state, &grads.z)?;
        let mut center_grad: Matrix = grads.centers;
        if let (Some(other), Some(t)) = (transformed_grads, transformed) {
            let extra = projection_gradients(t, &state, &other.z)?;
            add_into(proj.weights.as_mut_slice(), extra.weights.as_slice());
            add_into(&mut proj.offset, &extra.offset);
            add_into(center_grad.as_mut_slice(), other.centers.as_slice());
        }

        let lr = cfg.learning_rate;
        let (centers, weights, offset) = state.params_mut();
        for (param, g) in centers
            .iter_mut()
            .zip(center_grad.as_slice())
            .chain(weights.iter_mut().zip(proj.weights.as_slice()))
            .chain(offset.iter_mut().zip(&proj.offset))
        {
            *param -= lr * g;
        }
        if centers.iter().chain(weights.iter()).chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(DtcError::Diverged { epoch });
        }

        if cfg.variant == Variant::Tep {
            let (next, s) = ema_update(&ensemble, &p)?;
            ensemble = next;
            smoothed = Some(s);
        }
    }

    let (assignment, _) = predict(features, &state)?;
    Ok(TrainOutcome {
        state,
        assignment,
        history,
    })
}
