//! Multiple kernel learning: weights `β ≥ 0` over sub-kernels so that the fused
//! kernel `κ = Σ_k β_k K_k` minimizes the summed one-vs-rest SVM dual objective.
//!
//! Two solvers share one model type:
//! * [`silp_l1`]: cutting-plane SILP with an LP master over the simplex `Σβ = 1`;
//! * [`l2_mkl`]: alternating SVM solves and closed-form updates on the
//!   non-negative unit L2 sphere `Σβ² = 1`.
//!
//! One β is shared by all classes; cuts and block norms are summed over classes.

mod io;
mod l2;
mod silp;

pub use io::{
    decode_mkl_model, encode_mkl_model, load_mkl_model, save_mkl_model, trace_csv, PLMK_MAGIC,
};
pub use l2::l2_mkl;
pub use silp::{silp_l1, Cut};

use crate::dataio::LabelVector;
use crate::kernels::{combine_blocks, combine_kernels, KernelError, KernelMatrix};
use crate::lp::{LpError, LpStatus};
use crate::matrix::Matrix;
use crate::svm::{predict_multiclass, quadratic_form, MulticlassSvmModel, SmoParams, SvmError};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MklError {
    #[error("no kernels supplied")]
    NoKernels,
    #[error("kernel mismatch: {0}")]
    KernelMismatch(String),
    #[error("every kernel has a zero block norm; weights undefined")]
    AllKernelsInactive,
    #[error("master LP ended with status {0:?}")]
    MasterLp(LpStatus),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    L1,
    L2,
}

impl NormMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormMode::L1 => "l1",
            NormMode::L2 => "l2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l1" => Some(NormMode::L1),
            "l2" => Some(NormMode::L2),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MklParams {
    pub svm: SmoParams,
    /// SILP relative gap `|1 − Σβ_k s_k / θ|` at which to stop.
    pub eps: f64,
    pub max_cuts: usize,
    /// L2: stop when `max_k |Δβ_k|` is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MklParams {
    fn default() -> Self {
        MklParams {
            svm: SmoParams::default(),
            eps: 1e-3,
            max_cuts: 300,
            tol: 1e-5,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Best lower bound so far on the optimal MKL objective (summed SVM duals).
    /// For SILP this is the negated master LP value.
    pub theta: f64,
    /// SILP: relative gap of the newest cut. L2: largest weight change.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MklModel {
    pub beta: Vec<f64>,
    pub norm_mode: NormMode,
    pub fused_svm: MulticlassSvmModel,
    pub trace: Vec<TraceEntry>,
    pub kernel_ids: Vec<String>,
    /// False when the cut or iteration budget ran out first.
    pub converged: bool,
}

impl MklModel {
    /// MKL and every fused binary SVM converged.
    pub fn fully_converged(&self) -> bool {
        self.converged && self.fused_svm.converged()
    }
}

/// `S(α) = ½ Σ_ij α_i α_j y_i y_j K_ij − Σ_i α_i`.
pub fn sk_objective(alpha: &[f64], y: &[f64], k: &KernelMatrix) -> Result<f64, MklError> {
    if alpha.len() != k.n() || y.len() != k.n() {
        return Err(MklError::ShapeMismatch(format!(
            "α has {}, y has {}, kernel is {}x{}",
            alpha.len(),
            y.len(),
            k.n(),
            k.n()
        )));
    }
    Ok(0.5 * quadratic_form(alpha, y, k.matrix()) - alpha.iter().sum::<f64>())
}

/// Fuses the per-kernel test×train blocks with the model's β and predicts.
pub fn mkl_predict(m: &MklModel, blocks: &[&Matrix]) -> Result<(Vec<usize>, Matrix), MklError> {
    if blocks.len() != m.beta.len() {
        return Err(MklError::ShapeMismatch(format!(
            "{} kernel blocks for {} weights",
            blocks.len(),
            m.beta.len()
        )));
    }
    let fused = combine_blocks(blocks, &m.beta)?;
    Ok(predict_multiclass(&m.fused_svm, &fused)?)
}

pub(crate) fn check_kernels(ks: &[&KernelMatrix], labels: &LabelVector) -> Result<(), MklError> {
    let first = ks.first().ok_or(MklError::NoKernels)?;
    if let Some((i, k)) = ks.iter().enumerate().find(|(_, k)| k.n() != first.n()) {
        return Err(MklError::KernelMismatch(format!(
            "kernel {i} is {}x{}, kernel 0 is {}x{}",
            k.n(),
            k.n(),
            first.n(),
            first.n()
        )));
    }
    if labels.len() != first.n() {
        return Err(MklError::KernelMismatch(format!(
            "{} labels for {}x{} kernels",
            labels.len(),
            first.n(),
            first.n()
        )));
    }
    Ok(())
}

pub(crate) fn kernel_ids(ks: &[&KernelMatrix]) -> Vec<String> {
    ks.iter()
        .enumerate()
        .map(|(i, k)| {
            k.provenance
                .pillar
                .clone()
                .unwrap_or_else(|| format!("kernel{i}"))
        })
        .collect()
}

/// Per-kernel `Σ_classes α_cᵀ Y_c K_k Y_c α_c` for a trained one-vs-rest model.
pub(crate) fn class_summed_quadratics(ks: &[&KernelMatrix], svm: &MulticlassSvmModel) -> Vec<f64> {
    ks.iter()
        .map(|k| {
            svm.per_class
                .iter()
                .map(|m| quadratic_form(&m.alpha, &m.y, k.matrix()))
                .sum()
        })
        .collect()
}

pub(crate) fn fuse(ks: &[&KernelMatrix], beta: &[f64]) -> Result<KernelMatrix, MklError> {
    Ok(combine_kernels(ks, beta)?)
}

/// Summed one-vs-rest SVM dual objective of the kernel fused with `beta`.
pub fn mkl_objective(
    ks: &[&KernelMatrix],
    labels: &LabelVector,
    beta: &[f64],
    svm: &SmoParams,
) -> Result<(f64, MulticlassSvmModel), MklError> {
    check_kernels(ks, labels)?;
    let fused = fuse(ks, beta)?;
    let model = crate::svm::train_one_vs_rest(&fused, labels, svm)?;
    let obj = model
        .per_class
        .iter()
        .map(|m| m.dual_objective(&fused))
        .sum();
    Ok((obj, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Provenance;

    #[test]
    fn sk_two_point_and_zero() {
        let k = KernelMatrix::new(
            Matrix::from_vec(2, 2, vec![1.0, -1.0, -1.0, 1.0]),
            Provenance::default(),
        )
        .unwrap();
        let y = [1.0, -1.0];
        assert_eq!(sk_objective(&[0.0, 0.0], &y, &k).unwrap(), 0.0);
        assert_eq!(sk_objective(&[0.5, 0.5], &y, &k).unwrap(), -0.5);
        assert!(sk_objective(&[0.5], &y, &k).is_err());
    }
}
