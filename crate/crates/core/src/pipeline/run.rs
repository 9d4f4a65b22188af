use std::time::Instant;

use super::{
    load_features, load_labels, write_outputs, ExperimentConfig, ExperimentReport, PipelineError,
    Timing,
};
use crate::dtc::{jitter_features, train, Variant};
use crate::embedding::{init_projection, kmeans, pca_fit};
use crate::metrics::evaluate_with;
use crate::model::{ClusterState, FeatureMatrix, LabelVector};

/// A validated config with every input file loaded.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    pub config: ExperimentConfig,
    pub features: FeatureMatrix,
    pub transformed: Option<FeatureMatrix>,
    pub labels: Option<LabelVector>,
    pub embed_dim: usize,
    ingest_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub assignment: LabelVector,
    pub timing: Timing,
}

// keeps the jittered view's noise stream apart from the k-means stream
const JITTER_SEED_OFFSET: u64 = 0x6a09_e667_f3bc_c909;

/// Validates the config and loads and cross-checks every referenced file.
/// Nothing is written.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedExperiment, PipelineError> {
    let start = Instant::now();
    cfg.check()?;
    let ingest = |path: &std::path::Path| {
        load_features(path).map_err(|source| PipelineError::Ingest {
            path: path.to_path_buf(),
            source,
        })
    };
    let features = ingest(&cfg.features)?;
    let (n, d) = (features.n_samples(), features.n_features());

    let transformed = match (&cfg.transformed_features, cfg.train.variant) {
        (Some(path), Variant::Pi) => {
            let t = ingest(path)?;
            if t.n_samples() != n || t.n_features() != d {
                return Err(PipelineError::Data(format!(
                    "transformed features are {}x{}, features {n}x{d}",
                    t.n_samples(),
                    t.n_features()
                )));
            }
            Some(t)
        }
        _ => None,
    };

    let labels = match &cfg.labels {
        Some(path) => {
            let l = load_labels(path).map_err(|source| PipelineError::Ingest {
                path: path.clone(),
                source,
            })?;
            if l.len() != n {
                return Err(PipelineError::Data(format!(
                    "{} has {} labels for {n} samples",
                    path.display(),
                    l.len()
                )));
            }
            Some(l)
        }
        None => None,
    };

    if cfg.clusters > n {
        return Err(PipelineError::Data(format!(
            "{} clusters requested for {n} samples",
            cfg.clusters
        )));
    }
    let embed_dim = cfg.embed_dim.unwrap_or(cfg.clusters.min(d));
    let max_dim = d.min(n.saturating_sub(1));
    if embed_dim > max_dim {
        return Err(PipelineError::Config(format!(
            "embed_dim {embed_dim} exceeds min(N-1, D) = {max_dim}"
        )));
    }

    Ok(PreparedExperiment {
        config: cfg.clone(),
        features,
        transformed,
        labels,
        embed_dim,
        ingest_s: start.elapsed().as_secs_f64(),
    })
}

/// PCA → k-means → train → predict → metrics, all in memory.
pub fn run_prepared(p: &PreparedExperiment) -> Result<ExperimentOutcome, PipelineError> {
    let cfg = &p.config;
    let seed = cfg.train.seed;
    let mut timing = Timing {
        ingest_s: p.ingest_s,
        ..Timing::default()
    };

    let t0 = Instant::now();
    let pca = pca_fit(&p.features, p.embed_dim)?;
    let (weights, offset) = init_projection(&pca);
    let z = FeatureMatrix::new(pca.transform(&p.features)).map_err(|e| PipelineError::Data(e.to_string()))?;
    let km = kmeans(&z, cfg.clusters, seed, cfg.kmeans_iters)?;
    let initial = ClusterState::new(km.centers, weights, offset, cfg.train.alpha)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    let jittered = match (cfg.train.variant, &p.transformed) {
        (Variant::Pi, None) => Some(jitter_features(
            &p.features,
            cfg.jitter_sigma,
            seed.wrapping_add(JITTER_SEED_OFFSET),
        )?),
        _ => None,
    };
    timing.init_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let transform = p.transformed.as_ref().or(jittered.as_ref());
    let outcome = train(&p.features, &initial, &cfg.train, transform)?;
    timing.train_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let metrics = p
        .labels
        .as_ref()
        .map(|truth| evaluate_with(&outcome.assignment, truth, cfg.nmi_normalization))
        .transpose()?;
    timing.eval_s = t2.elapsed().as_secs_f64();

    Ok(ExperimentOutcome {
        report: ExperimentReport {
            config: cfg.clone(),
            n_samples: p.features.n_samples(),
            n_features: p.features.n_features(),
            embed_dim: p.embed_dim,
            history: outcome.history,
            metrics,
        },
        assignment: outcome.assignment,
        timing,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, PipelineError> {
    run_prepared(&prepare(cfg)?)
}

/// Runs the experiment and writes its outputs. Validation and loading
/// finish before the output directory is touched.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, PipelineError> {
    let outcome = run_experiment(cfg)?;
    write_outputs(&outcome, &cfg.output_dir, cfg.report_format)?;
    Ok(outcome)
}
