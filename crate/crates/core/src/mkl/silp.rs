use super::{
    check_kernels, class_summed_quadratics, fuse, kernel_ids, MklError, MklModel, MklParams,
    NormMode, TraceEntry,
};
use crate::dataio::LabelVector;
use crate::kernels::KernelMatrix;
use crate::lp::{solve_lp, LpProblem, LpStatus, VarBounds};
use crate::svm::train_one_vs_rest;

/// One linear constraint `Σ_k β_k s_k ≥ θ`, instantiated at the dual points of
/// every class-vs-rest problem at a given iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    /// `s_k = Σ_classes S_k(α_c)`.
    pub s: Vec<f64>,
    /// `None` when summed over all classes.
    pub class_id: Option<usize>,
    pub iteration: usize,
}

/// Cutting-plane SILP over the simplex.
///
/// Each round trains the one-vs-rest SVM on the current fused kernel, turns its
/// dual points into a cut, and re-solves the restricted master
/// `max θ  s.t.  Σ_k β_k s_k^(t) ≥ θ ∀t,  β ≥ 0,  Σβ = 1`.
/// Stops once the newest cut is satisfied to relative gap `eps`, or after
/// `max_cuts` cuts.
pub fn silp_l1(
    ks: &[&KernelMatrix],
    labels: &LabelVector,
    params: &MklParams,
) -> Result<MklModel, MklError> {
    check_kernels(ks, labels)?;
    let n_kernels = ks.len();
    let mut beta = vec![1.0 / n_kernels as f64; n_kernels];
    let mut theta: Option<f64> = None;
    let mut cuts: Vec<Cut> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;

    let fused_svm = loop {
        let iteration = cuts.len() + 1;
        let fused = fuse(ks, &beta)?;
        let svm = train_one_vs_rest(&fused, labels, &params.svm)?;

        let alpha_sum: f64 = svm.per_class.iter().flat_map(|m| m.alpha.iter()).sum();
        let s: Vec<f64> = class_summed_quadratics(ks, &svm)
            .into_iter()
            .map(|q| 0.5 * q - alpha_sum)
            .collect();

        if let Some(theta) = theta {
            let current: f64 = beta.iter().zip(&s).map(|(b, s)| b * s).sum();
            let gap = if theta != 0.0 {
                (1.0 - current / theta).abs()
            } else {
                current.abs()
            };
            trace.push(TraceEntry {
                iteration: iteration - 1,
                theta: -theta,
                gap,
            });
            if gap <= params.eps {
                converged = true;
                break svm;
            }
        }
        if cuts.len() >= params.max_cuts {
            break svm;
        }
        cuts.push(Cut {
            s,
            class_id: None,
            iteration,
        });
        let (b, t) = solve_master(&cuts, n_kernels)?;
        beta = b;
        theta = Some(t);
    };

    Ok(MklModel {
        beta,
        norm_mode: NormMode::L1,
        fused_svm,
        trace,
        kernel_ids: kernel_ids(ks),
        converged,
    })
}

/// Variables `[β_1 … β_K, θ]`.
fn solve_master(cuts: &[Cut], n_kernels: usize) -> Result<(Vec<f64>, f64), MklError> {
    let mut objective = vec![0.0; n_kernels + 1];
    objective[n_kernels] = 1.0;
    let mut lp = LpProblem::new(objective);
    lp.bounds[n_kernels] = VarBounds::FREE;
    for cut in cuts {
        let mut row: Vec<f64> = cut.s.iter().map(|s| -s).collect();
        row.push(1.0);
        lp.ineq.push((row, 0.0));
    }
    let mut simplex = vec![1.0; n_kernels];
    simplex.push(0.0);
    lp.eq.push((simplex, 1.0));

    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(MklError::MasterLp(sol.status));
    }
    let mut beta: Vec<f64> = sol.v[..n_kernels].iter().map(|&b| b.max(0.0)).collect();
    let total: f64 = beta.iter().sum();
    beta.iter_mut().for_each(|b| *b /= total);
    Ok((beta, sol.v[n_kernels]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn master_picks_best_vertex() {
        // two cuts; max_β min(−2β1 − β2, −β1 − 3β2) over the simplex → β = (2/3, 1/3)
        let cuts = vec![
            Cut {
                s: vec![-2.0, -1.0],
                class_id: None,
                iteration: 1,
            },
            Cut {
                s: vec![-1.0, -3.0],
                class_id: None,
                iteration: 2,
            },
        ];
        let (beta, theta) = solve_master(&cuts, 2).unwrap();
        assert!((beta[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((theta + 5.0 / 3.0).abs() < 1e-12);
    }
}
