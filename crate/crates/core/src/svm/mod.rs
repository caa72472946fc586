//! Soft-margin C-SVM solved in the dual over a precomputed kernel.
//!
//! The dual being solved is
//!
//! ```text
//! max_α  Σ α_i − ½ Σ_ij α_i α_j y_i y_j K_ij   s.t.  0 ≤ α_i ≤ C,  Σ α_i y_i = 0
//! ```
//!
//! with decision function `f(x) = Σ_i α_i y_i k(x_i, x) + b`. The primal weight
//! vector and slacks are never materialized.

pub(crate) mod io;
mod multiclass;
mod smo;

pub use io::{decode_multiclass, encode_multiclass, load_multiclass, save_multiclass, PLSV_MAGIC};
pub use multiclass::{
    argmax_rows, class_signs, predict_multiclass, train_one_vs_rest, MulticlassSvmModel,
};
pub use smo::{smo_train, SmoParams};

use crate::kernels::KernelMatrix;
use crate::matrix::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum SvmError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("class {0} has no training samples")]
    EmptyClass(usize),
    #[error("fewer than two classes among training rows")]
    TooFewClasses,
    #[error("SMO did not converge within {iterations} pair updates (KKT gap {gap:.3e})")]
    NoConvergence { iterations: u64, gap: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid SVM parameters: {0}")]
    InvalidParams(String),
    #[error("labels must be +1 or -1, found {0}")]
    InvalidSign(f64),
}

/// Dual solution of one binary problem.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvmModel {
    pub alpha: Vec<f64>,
    /// ±1 per training row.
    pub y: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub tol: f64,
    pub support_indices: Vec<usize>,
    /// Row `i` of this problem is sample `train_index_map[i]` of the source dataset.
    pub train_index_map: Vec<usize>,
    pub converged: bool,
    pub iterations: u64,
    /// Final maximal-violating-pair gap.
    pub kkt_gap: f64,
}

impl BinarySvmModel {
    pub fn n_train(&self) -> usize {
        self.alpha.len()
    }

    /// `Σ α_i − ½ αᵀ Y K Y α`.
    pub fn dual_objective(&self, k: &KernelMatrix) -> f64 {
        let quad = quadratic_form(&self.alpha, &self.y, k.matrix());
        self.alpha.iter().sum::<f64>() - 0.5 * quad
    }

    /// Escalates a non-converged model to an error.
    pub fn require_converged(&self) -> Result<&Self, SvmError> {
        if self.converged {
            Ok(self)
        } else {
            Err(SvmError::NoConvergence {
                iterations: self.iterations,
                gap: self.kkt_gap,
            })
        }
    }
}

/// `αᵀ Y K Y α` summed over the non-zero coefficients.
pub(crate) fn quadratic_form(alpha: &[f64], y: &[f64], k: &Matrix) -> f64 {
    let sv: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] != 0.0).collect();
    let mut total = 0.0;
    for &i in &sv {
        let row = k.row(i);
        let inner: f64 = sv.iter().map(|&j| alpha[j] * y[j] * row[j]).sum();
        total += alpha[i] * y[i] * inner;
    }
    total
}

/// `f(x) = Σ_i α_i y_i K(x, x_i) + b` for each row of a test×train block.
pub fn decision_values(m: &BinarySvmModel, k_test_train: &Matrix) -> Result<Vec<f64>, SvmError> {
    if k_test_train.cols() != m.n_train() {
        return Err(SvmError::ShapeMismatch(format!(
            "kernel block has {} columns, model has {} training rows",
            k_test_train.cols(),
            m.n_train()
        )));
    }
    let coef: Vec<(usize, f64)> = m
        .support_indices
        .iter()
        .map(|&i| (i, m.alpha[i] * m.y[i]))
        .collect();
    Ok((0..k_test_train.rows())
        .map(|t| {
            let row = k_test_train.row(t);
            coef.iter().map(|&(i, w)| w * row[i]).sum::<f64>() + m.b
        })
        .collect())
}

/// Primal value (implicit `w`, `ζ_i = max(0, 1 − y_i f(x_i))`) minus dual value.
pub fn duality_gap(
    m: &BinarySvmModel,
    k: &KernelMatrix,
    y: &[f64],
    c: f64,
) -> Result<f64, SvmError> {
    let n = m.n_train();
    if k.n() != n || y.len() != n {
        return Err(SvmError::ShapeMismatch(format!(
            "model has {n} rows, kernel {}, labels {}",
            k.n(),
            y.len()
        )));
    }
    let quad = quadratic_form(&m.alpha, y, k.matrix());
    let f = decision_values(
        &BinarySvmModel {
            y: y.to_vec(),
            ..m.clone()
        },
        k.matrix(),
    )?;
    let slack: f64 = f
        .iter()
        .zip(y)
        .map(|(fi, yi)| (1.0 - yi * fi).max(0.0))
        .sum();
    let primal = 0.5 * quad + c * slack;
    let dual = m.alpha.iter().sum::<f64>() - 0.5 * quad;
    Ok(primal - dual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Provenance;

    fn two_point() -> (KernelMatrix, Vec<f64>) {
        let k = KernelMatrix::new(
            Matrix::from_vec(2, 2, vec![1.0, -1.0, -1.0, 1.0]),
            Provenance::default(),
        )
        .unwrap();
        (k, vec![1.0, -1.0])
    }

    fn zero_model(n: usize, b: f64) -> BinarySvmModel {
        BinarySvmModel {
            alpha: vec![0.0; n],
            y: vec![1.0; n],
            b,
            c: 100.0,
            tol: 1e-3,
            support_indices: vec![],
            train_index_map: (0..n).collect(),
            converged: true,
            iterations: 0,
            kkt_gap: 0.0,
        }
    }

    #[test]
    fn two_point_analytic() {
        let (k, y) = two_point();
        let m = smo_train(&k, &y, &SmoParams::default()).unwrap();
        assert_eq!(m.alpha, vec![0.5, 0.5]);
        assert_eq!(m.b, 0.0);
        assert_eq!(decision_values(&m, k.matrix()).unwrap(), vec![1.0, -1.0]);
        assert!(duality_gap(&m, &k, &y, 100.0).unwrap() <= 1e-8);
    }

    #[test]
    fn zero_alpha_decisions_are_bias() {
        let m = zero_model(3, 0.3);
        let block = Matrix::from_fn(4, 3, |i, j| (i + j) as f64);
        assert_eq!(decision_values(&m, &block).unwrap(), vec![0.3; 4]);
        assert!(decision_values(&m, &Matrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn zero_alpha_gap_is_c_times_n() {
        let (k, y) = two_point();
        let m = zero_model(2, 0.0);
        assert_eq!(duality_gap(&m, &k, &y, 100.0).unwrap(), 200.0);
    }

    #[test]
    fn single_class_rejected() {
        let (k, _) = two_point();
        assert!(matches!(
            smo_train(&k, &[1.0, 1.0], &SmoParams::default()),
            Err(SvmError::SingleClass)
        ));
        assert!(matches!(
            smo_train(&k, &[1.0, 0.5], &SmoParams::default()),
            Err(SvmError::InvalidSign(_))
        ));
    }
}
