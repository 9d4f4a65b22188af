use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{format_labels, ExperimentConfig, ExperimentOutcome, PipelineError, ReportFormat};
use crate::metrics::Scores;
use crate::model::LossBreakdown;

/// Everything about a run that is a deterministic function of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub n_samples: usize,
    pub n_features: usize,
    pub embed_dim: usize,
    pub history: Vec<LossBreakdown>,
    /// Absent when no ground-truth labels were supplied.
    pub metrics: Option<Scores>,
}

/// Wall-clock seconds per stage. Kept out of the report so reports stay
/// byte-identical across runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub ingest_s: f64,
    pub init_s: f64,
    pub train_s: f64,
    pub eval_s: f64,
}

/// Three rows, four decimals each.
pub fn format_scores(scores: Option<&Scores>) -> String {
    match scores {
        Some(s) => format!(
            "Accuracy {:.4}\nNMI {:.4}\nARI {:.4}\n",
            s.acc, s.nmi, s.ari
        ),
        None => "Accuracy n/a\nNMI n/a\nARI n/a\n".to_string(),
    }
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => format_scores(report.metrics.as_ref()),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report is always serializable");
            s.push('\n');
            s
        }
    }
}

/// Writes the report, per-sample assignments and timing into `dir`,
/// creating it if needed. Returns the written paths.
pub fn write_outputs(
    outcome: &ExperimentOutcome,
    dir: &Path,
    format: ReportFormat,
) -> Result<Vec<PathBuf>, PipelineError> {
    let fail = |p: &Path, e: std::io::Error| PipelineError::Output(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| fail(dir, e))?;
    let report_path = dir.join(match format {
        ReportFormat::Text => "report.txt",
        ReportFormat::Json => "report.json",
    });
    let assignments_path = dir.join("assignments.txt");
    let timing_path = dir.join("timing.json");
    let timing = serde_json::to_string_pretty(&outcome.timing).expect("timing is serializable") + "\n";
    for (path, body) in [
        (&report_path, emit_report(&outcome.report, format)),
        (&assignments_path, format_labels(&outcome.assignment)),
        (&timing_path, timing),
    ] {
        std::fs::write(path, body).map_err(|e| fail(path, e))?;
    }
    Ok(vec![report_path, assignments_path, timing_path])
}
