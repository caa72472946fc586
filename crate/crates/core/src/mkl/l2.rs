use super::{
    check_kernels, class_summed_quadratics, fuse, kernel_ids, MklError, MklModel, MklParams,
    NormMode, TraceEntry,
};
use crate::dataio::LabelVector;
use crate::kernels::KernelMatrix;
use crate::svm::train_one_vs_rest;

/// Alternating L2-norm MKL on `{β ≥ 0, Σβ² ≤ 1}`.
///
/// With `q_k = β_k² Σ_classes αᵀ Y K_k Y α` (the squared block norm `‖w_k‖²`),
/// the weight update `β_k = q_k^{1/3} / (Σ_l q_l^{2/3})^{1/2}` is the exact
/// minimizer for fixed SVM solutions and always lands on the unit sphere.
pub fn l2_mkl(
    ks: &[&KernelMatrix],
    labels: &LabelVector,
    params: &MklParams,
) -> Result<MklModel, MklError> {
    check_kernels(ks, labels)?;
    let n_kernels = ks.len();
    let mut beta = vec![1.0 / (n_kernels as f64).sqrt(); n_kernels];
    let mut trace = Vec::new();
    let mut best_bound = f64::NEG_INFINITY;
    let mut converged = false;

    for iteration in 1..=params.max_iter {
        let fused = fuse(ks, &beta)?;
        let svm = train_one_vs_rest(&fused, labels, &params.svm)?;
        let quads = class_summed_quadratics(ks, &svm);

        // min over the unit ball of Σα − ½ Σ β_k r_k is Σα − ½‖r‖₂: a lower
        // bound on the optimal objective for any feasible α.
        let alpha_sum: f64 = svm.per_class.iter().flat_map(|m| m.alpha.iter()).sum();
        let r_norm = quads.iter().map(|r| r * r).sum::<f64>().sqrt();
        best_bound = best_bound.max(alpha_sum - 0.5 * r_norm);

        let q: Vec<f64> = quads
            .iter()
            .zip(&beta)
            .map(|(r, b)| (b * b * r).max(0.0))
            .collect();
        let denom = q.iter().map(|v| v.powf(2.0 / 3.0)).sum::<f64>().sqrt();
        if !(denom > 0.0) {
            return Err(MklError::AllKernelsInactive);
        }
        let next: Vec<f64> = if n_kernels == 1 {
            vec![1.0]
        } else {
            q.iter().map(|v| v.cbrt() / denom).collect()
        };
        let change = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        trace.push(TraceEntry {
            iteration,
            theta: best_bound,
            gap: change,
        });
        beta = next;
        if change <= params.tol {
            converged = true;
            break;
        }
    }

    let fused = fuse(ks, &beta)?;
    let fused_svm = train_one_vs_rest(&fused, labels, &params.svm)?;
    Ok(MklModel {
        beta,
        norm_mode: NormMode::L2,
        fused_svm,
        trace,
        kernel_ids: kernel_ids(ks),
        converged,
    })
}
