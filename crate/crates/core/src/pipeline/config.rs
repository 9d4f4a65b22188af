use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dtc::{ConsistencyNorm, TrainConfig, Variant};
use crate::grabcut::GrabcutParams;
use crate::metrics::NmiNormalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format '{other}' (expected text or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub features: PathBuf,
    pub transformed_features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub clusters: usize,
    /// Embedded dimension; `None` means `min(clusters, feature dim)`.
    pub embed_dim: Option<usize>,
    pub kmeans_iters: usize,
    /// When positive and no transformed features are given, the transformed
    /// view is the input plus seeded Gaussian noise of this deviation.
    pub jitter_sigma: f64,
    pub nmi_normalization: NmiNormalization,
    pub report_format: ReportFormat,
    pub train: TrainConfig,
    pub grabcut: GrabcutParams,
    pub grabcut_iterations: usize,
}

/// Every key accepted in config files and `key=value` overrides.
pub const CONFIG_KEYS: &[&str] = &[
    "features",
    "transformed_features",
    "labels",
    "output_dir",
    "clusters",
    "embed_dim",
    "kmeans_iters",
    "jitter_sigma",
    "nmi_normalization",
    "report_format",
    "variant",
    "epochs",
    "ramp_length",
    "learning_rate",
    "alpha",
    "beta",
    "target_update_interval",
    "seed",
    "consistency_norm",
    "grabcut_components",
    "grabcut_gamma",
    "grabcut_iterations",
];

const PATH_KEYS: &[&str] = &["features", "transformed_features", "labels", "output_dir"];

/// Splits `key=value` lines; `#` starts a comment line. Returns
/// `(key, value, line number)`.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String, usize)>, PipelineError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            PipelineError::Config(format!("line {}: expected key=value, found '{line}'", i + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| PipelineError::Config(format!("{key}: cannot parse '{value}': {e}")))
}

impl ExperimentConfig {
    /// Builds a config from an optional key=value file and trailing
    /// `key=value` overrides; overrides win. Relative paths in the file
    /// resolve against the file's directory, those in overrides against the
    /// working directory.
    pub fn from_sources(file: Option<&Path>, overrides: &[String]) -> Result<Self, PipelineError> {
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                PipelineError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            let base = path.parent().unwrap_or(Path::new(""));
            for (k, v, line) in parse_key_values(&text)? {
                let v = if PATH_KEYS.contains(&k.as_str()) && !v.is_empty() {
                    base.join(&v).to_string_lossy().into_owned()
                } else {
                    v
                };
                if values.insert(k.clone(), v).is_some() {
                    return Err(PipelineError::Config(format!(
                        "{}: line {line}: duplicate key '{k}'",
                        path.display()
                    )));
                }
            }
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("override '{o}' is not key=value"))
            })?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_map(&values)
    }

    pub fn from_map(values: &BTreeMap<String, String>) -> Result<Self, PipelineError> {
        if let Some(k) = values.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(PipelineError::Config(format!("unknown key '{k}'")));
        }
        let get = |k: &str| values.get(k).map(String::as_str).filter(|v| !v.is_empty());
        let required = |k: &str| {
            get(k).ok_or_else(|| PipelineError::Config(format!("missing required key '{k}'")))
        };

        let mut train = TrainConfig::default();
        let grabcut_defaults = GrabcutParams::default();
        let mut cfg = ExperimentConfig {
            features: PathBuf::from(required("features")?),
            transformed_features: get("transformed_features").map(PathBuf::from),
            labels: get("labels").map(PathBuf::from),
            output_dir: PathBuf::from(required("output_dir")?),
            clusters: parse_value("clusters", required("clusters")?)?,
            embed_dim: get("embed_dim").map(|v| parse_value("embed_dim", v)).transpose()?,
            kmeans_iters: 100,
            jitter_sigma: 0.0,
            nmi_normalization: NmiNormalization::Geometric,
            report_format: ReportFormat::Text,
            train: TrainConfig::default(),
            grabcut: grabcut_defaults.clone(),
            grabcut_iterations: 5,
        };
        if let Some(v) = get("kmeans_iters") {
            cfg.kmeans_iters = parse_value("kmeans_iters", v)?;
        }
        if let Some(v) = get("jitter_sigma") {
            cfg.jitter_sigma = parse_value("jitter_sigma", v)?;
        }
        if let Some(v) = get("nmi_normalization") {
            cfg.nmi_normalization = match v.to_ascii_lowercase().as_str() {
                "geometric" => NmiNormalization::Geometric,
                "arithmetic" => NmiNormalization::Arithmetic,
                other => {
                    return Err(PipelineError::Config(format!(
                        "nmi_normalization: unknown '{other}' (expected geometric or arithmetic)"
                    )))
                }
            };
        }
        if let Some(v) = get("report_format") {
            cfg.report_format = parse_value("report_format", v)?;
        }
        if let Some(v) = get("variant") {
            train.variant = parse_value::<Variant>("variant", v)?;
        }
        if let Some(v) = get("epochs") {
            train.epochs = parse_value("epochs", v)?;
        }
        if let Some(v) = get("ramp_length") {
            train.ramp_length = parse_value("ramp_length", v)?;
        } else {
            // ramp over the whole run unless told otherwise
            train.ramp_length = train.epochs.max(1);
        }
        if let Some(v) = get("learning_rate") {
            train.learning_rate = parse_value("learning_rate", v)?;
        }
        if let Some(v) = get("alpha") {
            train.alpha = parse_value("alpha", v)?;
        }
        if let Some(v) = get("beta") {
            train.beta = parse_value("beta", v)?;
        }
        if let Some(v) = get("target_update_interval") {
            train.target_update_interval = parse_value("target_update_interval", v)?;
        }
        if let Some(v) = get("seed") {
            train.seed = parse_value("seed", v)?;
        }
        if let Some(v) = get("consistency_norm") {
            train.consistency_norm = match v.to_ascii_lowercase().as_str() {
                "squared" => ConsistencyNorm::Squared,
                "absolute" => ConsistencyNorm::Absolute,
                other => {
                    return Err(PipelineError::Config(format!(
                        "consistency_norm: unknown '{other}' (expected squared or absolute)"
                    )))
                }
            };
        }
        if let Some(v) = get("grabcut_components") {
            cfg.grabcut.components = parse_value("grabcut_components", v)?;
        }
        if let Some(v) = get("grabcut_gamma") {
            cfg.grabcut.gamma = parse_value("grabcut_gamma", v)?;
        }
        if let Some(v) = get("grabcut_iterations") {
            cfg.grabcut_iterations = parse_value("grabcut_iterations", v)?;
        }
        cfg.train = train;
        cfg.check()?;
        Ok(cfg)
    }

    /// Checks that need no file access.
    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.train
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.clusters < 2 {
            return bad(format!("clusters must be at least 2 (got {})", self.clusters));
        }
        if self.embed_dim == Some(0) {
            return bad("embed_dim must be at least 1".into());
        }
        if self.kmeans_iters == 0 {
            return bad("kmeans_iters must be at least 1".into());
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return bad(format!("jitter_sigma must be non-negative (got {})", self.jitter_sigma));
        }
        if self.train.variant == Variant::Pi
            && self.transformed_features.is_none()
            && self.jitter_sigma == 0.0
        {
            return bad("variant PI needs transformed_features or jitter_sigma > 0".into());
        }
        if self.grabcut_iterations == 0 {
            return bad("grabcut_iterations must be at least 1".into());
        }
        self.grabcut
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}
