use super::{BinarySvmModel, SvmError};
use crate::kernels::KernelMatrix;

/// Second-order curvature floor for non positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    /// Stop when the maximal violating pair gap `m(α) − M(α)` is at most this.
    pub tol: f64,
    /// Maximum number of pair updates.
    pub max_iter: u64,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams {
            c: 100.0,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

impl SmoParams {
    pub fn validate(&self) -> Result<(), SvmError> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SvmError::InvalidParams(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(SvmError::InvalidParams(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// SMO with maximal-violating-pair working-set selection.
///
/// Gradient of the minimization form `½αᵀQα − eᵀα` is kept incrementally.
/// When `max_iter` is hit the last (highest-dual) iterate is returned with
/// `converged = false`.
pub fn smo_train(
    k: &KernelMatrix,
    y: &[f64],
    params: &SmoParams,
) -> Result<BinarySvmModel, SvmError> {
    params.validate()?;
    let n = k.n();
    if y.len() != n {
        return Err(SvmError::ShapeMismatch(format!(
            "{} labels for a {n}x{n} kernel",
            y.len()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::InvalidSign(bad));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(SvmError::SingleClass);
    }
    let c = params.c;
    let km = k.matrix();
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let mut iterations = 0u64;
    let mut gap;

    loop {
        // i ∈ I_up maximizing −y G, j ∈ I_low minimizing −y G
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 {
                alpha[t] < c
            } else {
                alpha[t] > 0.0
            };
            let low = if y[t] > 0.0 {
                alpha[t] > 0.0
            } else {
                alpha[t] < c
            };
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap <= params.tol {
            break;
        }
        if iterations >= params.max_iter {
            break;
        }
        iterations += 1;

        let (ki, kj) = (km.row(i), km.row(j));
        let quad = (ki[i] + kj[j] - 2.0 * ki[j]).max(TAU);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = old_i - old_j;
            ai = old_i + delta;
            aj = old_j + delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = old_i + old_j;
            ai = old_i - delta;
            aj = old_j + delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        ai = ai.clamp(0.0, c);
        aj = aj.clamp(0.0, c);
        alpha[i] = ai;
        alpha[j] = aj;

        // G_t += Q_ti Δα_i + Q_tj Δα_j with Q_ts = y_t y_s K_ts
        let di = y[i] * (ai - old_i);
        let dj = y[j] * (aj - old_j);
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * di + kj[t] * dj);
        }
    }

    let b = bias(&alpha, y, &grad, c);
    let support_indices = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(BinarySvmModel {
        alpha,
        y: y.to_vec(),
        b,
        c,
        tol: params.tol,
        support_indices,
        train_index_map: (0..n).collect(),
        converged: gap <= params.tol,
        iterations,
        kkt_gap: gap.max(0.0),
    })
}

/// Mean of `−y_i G_i` over free vectors, else midpoint of the feasible interval.
fn bias(alpha: &[f64], y: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        0.5 * (upper + lower)
    };
    -rho
}
