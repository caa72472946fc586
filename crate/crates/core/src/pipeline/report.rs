use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plan::{FusionPlan, GammaChoice, KernelChoice};
use super::{accuracy, mean, PipelineError};
use crate::dataio::LabelVector;
use crate::kernels::GammaMode;
use crate::matrix::Matrix;
use crate::mkl::TraceEntry;

/// One classifier's result on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub id: String,
    /// `pillar`, `group` or `fused`.
    pub kind: String,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// `n_test × n_classes` one-vs-rest decision values.
    pub scores: Vec<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub kernel_ids: Vec<String>,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
}

impl Evaluation {
    pub fn new(
        id: &str,
        kind: &str,
        predictions: Vec<usize>,
        scores: &Matrix,
        truth: &[usize],
    ) -> Result<Self, PipelineError> {
        Ok(Evaluation {
            id: id.to_string(),
            kind: kind.to_string(),
            accuracy: accuracy(&predictions, truth)?,
            predictions,
            scores: (0..scores.rows()).map(|r| scores.row(r).to_vec()).collect(),
            beta: None,
            kernel_ids: Vec::new(),
            trace: Vec::new(),
            converged: true,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split_id: usize,
    pub test_indices: Vec<usize>,
    pub truth: Vec<usize>,
    /// RBF γ per pillar as fitted on this split's training rows.
    pub gammas: Vec<Option<f64>>,
    pub evaluations: Vec<Evaluation>,
    /// Confusion matrix of the primary fused classifier.
    pub confusion: Vec<Vec<usize>>,
}

impl SplitReport {
    pub fn evaluation(&self, id: &str) -> Option<&Evaluation> {
        self.evaluations.iter().find(|e| e.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PillarEcho {
    pub id: String,
    pub features: String,
    pub kernel: String,
    pub gamma: String,
    pub normalization: String,
    pub l2norm: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupEcho {
    pub id: String,
    pub pillars: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub fusion_mode: String,
    pub norm_mode: String,
    pub c: f64,
    pub svm_tol: f64,
    pub svm_max_iter: u64,
    pub mkl_eps: f64,
    pub mkl_max_cuts: usize,
    pub mkl_tol: f64,
    pub mkl_max_iter: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub n_classes: usize,
    pub pillars: Vec<PillarEcho>,
    pub groups: Vec<GroupEcho>,
}

impl ConfigEcho {
    fn from_plan(plan: &FusionPlan, labels: &LabelVector) -> Self {
        ConfigEcho {
            fusion_mode: plan.mode.as_str().into(),
            norm_mode: plan.norm_mode.as_str().into(),
            c: plan.mkl.svm.c,
            svm_tol: plan.mkl.svm.tol,
            svm_max_iter: plan.mkl.svm.max_iter,
            mkl_eps: plan.mkl.eps,
            mkl_max_cuts: plan.mkl.max_cuts,
            mkl_tol: plan.mkl.tol,
            mkl_max_iter: plan.mkl.max_iter,
            seed: plan.seed,
            n_samples: labels.len(),
            n_classes: labels.n_classes(),
            pillars: plan
                .pillars
                .iter()
                .map(|p| {
                    let (kernel, gamma) = match p.kernel {
                        KernelChoice::Linear => ("linear", String::new()),
                        KernelChoice::Rbf(GammaChoice::Heuristic(GammaMode::Scale)) => {
                            ("rbf", "scale".into())
                        }
                        KernelChoice::Rbf(GammaChoice::Heuristic(GammaMode::Median)) => {
                            ("rbf", "median".into())
                        }
                        KernelChoice::Rbf(GammaChoice::Fixed(g)) => ("rbf", format!("{g:?}")),
                    };
                    PillarEcho {
                        id: p.id.clone(),
                        features: p.features.display().to_string(),
                        kernel: kernel.into(),
                        gamma,
                        normalization: p.normalization.as_str().into(),
                        l2norm: p.l2_normalize,
                    }
                })
                .collect(),
            groups: plan
                .groups
                .iter()
                .map(|g| GroupEcho {
                    id: g.id.clone(),
                    pillars: g.pillars.clone(),
                })
                .collect(),
        }
    }
}

/// Column-wise mean accuracy over splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub columns: Vec<String>,
    pub accuracy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ConfigEcho,
    pub pillar_ids: Vec<String>,
    pub group_ids: Vec<String>,
    /// Evaluation ids in column order: pillars, groups, primary fusion, alternate fusion.
    pub columns: Vec<String>,
    pub per_split: Vec<SplitReport>,
    pub average: AverageRow,
    /// Every SVM and MKL solve converged.
    pub converged: bool,
}

impl Report {
    /// Accuracy of column `id` on every split, in split order.
    pub fn column(&self, id: &str) -> Vec<f64> {
        self.per_split
            .iter()
            .filter_map(|s| s.evaluation(id).map(|e| e.accuracy))
            .collect()
    }

    /// Id of the fused column selected by the plan's fusion mode.
    pub fn primary_fused(&self) -> &str {
        &self.columns[self.pillar_ids.len() + self.group_ids.len()]
    }

    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn build_report(
    plan: &FusionPlan,
    labels: &LabelVector,
    per_split: Vec<SplitReport>,
) -> Report {
    let columns: Vec<String> = per_split[0]
        .evaluations
        .iter()
        .map(|e| e.id.clone())
        .collect();
    let accuracy = columns
        .iter()
        .enumerate()
        .map(|(c, _)| mean(per_split.iter().map(|s| s.evaluations[c].accuracy)))
        .collect();
    let converged = per_split
        .iter()
        .flat_map(|s| &s.evaluations)
        .all(|e| e.converged);
    Report {
        config: ConfigEcho::from_plan(plan, labels),
        pillar_ids: plan.pillars.iter().map(|p| p.id.clone()).collect(),
        group_ids: plan.groups.iter().map(|g| g.id.clone()).collect(),
        average: AverageRow {
            columns: columns.clone(),
            accuracy,
        },
        columns,
        per_split,
        converged,
    }
}

/// Accuracy table in percent: one row per split plus `Average`.
///
/// Values are written at full precision so the `Average` row is exactly the
/// mean of the rows above it.
pub fn report_csv(r: &Report) -> String {
    let mut out = String::from("split");
    for c in &r.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    let percent: Vec<Vec<f64>> = r
        .per_split
        .iter()
        .map(|s| s.evaluations.iter().map(|e| 100.0 * e.accuracy).collect())
        .collect();
    for (s, row) in r.per_split.iter().zip(&percent) {
        let _ = write!(out, "split-{}", s.split_id);
        row.iter().for_each(|v| {
            let _ = write!(out, ",{v:?}");
        });
        out.push('\n');
    }
    out.push_str("Average");
    for c in 0..r.columns.len() {
        let _ = write!(out, ",{:?}", mean(percent.iter().map(|row| row[c])));
    }
    out.push('\n');
    out
}

/// Fixed-width accuracy table in percent with one decimal.
pub fn render_table(r: &Report) -> String {
    let width = r.columns.iter().map(String::len).max().unwrap_or(0).max(7);
    let mut out = format!("{:<8}", "split");
    for c in &r.columns {
        let _ = write!(out, " {c:>width$}");
    }
    out.push('\n');
    for s in &r.per_split {
        let _ = write!(out, "{:<8}", format!("split-{}", s.split_id));
        for e in &s.evaluations {
            let _ = write!(out, " {:>width$.1}", 100.0 * e.accuracy);
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<8}", "Average");
    for a in &r.average.accuracy {
        let _ = write!(out, " {:>width$.1}", 100.0 * a);
    }
    out.push('\n');
    if !r.converged {
        out.push_str("warning: at least one solver stopped before converging\n");
    }
    out
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<prefix>.report.json` and `<prefix>.accuracy.csv`; returns both paths.
pub fn emit_report(
    r: &Report,
    prefix: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf), PipelineError> {
    let prefix = prefix.as_ref();
    let json = with_suffix(prefix, ".report.json");
    let csv = with_suffix(prefix, ".accuracy.csv");
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    for (path, body) in [(&json, r.to_json()?), (&csv, report_csv(r))] {
        std::fs::write(path, body).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok((json, csv))
}
