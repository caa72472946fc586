//! Three-split evaluation of per-pillar SVMs, per-group MKL and global fusion.

mod plan;
mod protocol;
mod report;

pub use plan::{
    FusionMode, FusionPlan, GammaChoice, Group, KernelChoice, PillarPlan, PlanOverrides,
};
pub use protocol::{
    load_inputs, pillar_kernels, run_protocol, run_protocol_with_features, PillarKernels,
};
pub use report::{
    emit_report, render_table, report_csv, AverageRow, ConfigEcho, Evaluation, GroupEcho,
    PillarEcho, Report, SplitReport,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("plan line {line}: {reason}")]
    PlanSyntax { line: usize, reason: String },
    #[error("pillar {pillar}: {source}")]
    Pillar {
        pillar: String,
        #[source]
        source: Box<crate::Error>,
    },
    #[error("split {split}, {stage}: {source}")]
    Stage {
        split: usize,
        stage: String,
        #[source]
        source: Box<crate::Error>,
    },
    #[error(
        "split {split}, pillar {pillar}: kernel is not PSD (min eigenvalue {min_eigenvalue:.3e})"
    )]
    NotPsd {
        split: usize,
        pillar: String,
        min_eigenvalue: f64,
    },
    #[error("length mismatch: {pred} predictions vs {truth} labels")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("cannot score an empty prediction set")]
    Empty,
    #[error("label {label} outside [0, {n_classes})")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// Fraction of exact matches.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, PipelineError> {
    if pred.len() != truth.len() {
        return Err(PipelineError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(PipelineError::Empty);
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// `m[t][p]` counts samples of true class `t` predicted as `p`.
pub fn confusion_matrix(
    pred: &[usize],
    truth: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<usize>>, PipelineError> {
    if pred.len() != truth.len() {
        return Err(PipelineError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut m = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if let Some(&label) = [p, t].iter().find(|&&l| l >= n_classes) {
            return Err(PipelineError::LabelOutOfRange { label, n_classes });
        }
        m[t][p] += 1;
    }
    Ok(m)
}

pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}
