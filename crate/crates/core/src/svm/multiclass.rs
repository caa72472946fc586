use rayon::prelude::*;

use super::{decision_values, smo_train, BinarySvmModel, SmoParams, SvmError};
use crate::dataio::LabelVector;
use crate::kernels::KernelMatrix;
use crate::matrix::Matrix;

/// One class-vs-rest binary model per class id.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassSvmModel {
    pub per_class: Vec<BinarySvmModel>,
    pub n_classes: usize,
}

impl MulticlassSvmModel {
    pub fn converged(&self) -> bool {
        self.per_class.iter().all(|m| m.converged)
    }

    /// Replaces every binary model's index map (rows of the training kernel → dataset ids).
    pub fn set_train_index_map(&mut self, map: &[usize]) {
        for m in &mut self.per_class {
            m.train_index_map = map.to_vec();
        }
    }

    pub fn n_train(&self) -> usize {
        self.per_class.first().map_or(0, BinarySvmModel::n_train)
    }
}

/// `y_t = +1` where `labels[t] == class`, else `−1`.
pub fn class_signs(labels: &[usize], class: usize) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l == class { 1.0 } else { -1.0 })
        .collect()
}

/// Trains the class-vs-rest problems concurrently against a shared kernel.
pub fn train_one_vs_rest(
    k: &KernelMatrix,
    labels: &LabelVector,
    params: &SmoParams,
) -> Result<MulticlassSvmModel, SvmError> {
    if labels.len() != k.n() {
        return Err(SvmError::ShapeMismatch(format!(
            "{} labels for a {}x{} kernel",
            labels.len(),
            k.n(),
            k.n()
        )));
    }
    let n_classes = labels.n_classes();
    if n_classes < 2 || labels.distinct_classes() < 2 {
        return Err(SvmError::TooFewClasses);
    }
    let mut counts = vec![0usize; n_classes];
    labels.labels().iter().for_each(|&l| counts[l] += 1);
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(SvmError::EmptyClass(empty));
    }
    let per_class = (0..n_classes)
        .into_par_iter()
        .map(|c| smo_train(k, &class_signs(labels.labels(), c), params))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MulticlassSvmModel {
        per_class,
        n_classes,
    })
}

/// Argmax over class decision values (ties go to the lowest class id), plus the
/// `n_test × n_classes` score matrix.
pub fn predict_multiclass(
    m: &MulticlassSvmModel,
    k_test_train: &Matrix,
) -> Result<(Vec<usize>, Matrix), SvmError> {
    let n_test = k_test_train.rows();
    let mut scores = Matrix::zeros(n_test, m.n_classes);
    for (c, model) in m.per_class.iter().enumerate() {
        for (t, v) in decision_values(model, k_test_train)?
            .into_iter()
            .enumerate()
        {
            scores.set(t, c, v);
        }
    }
    Ok((argmax_rows(&scores), scores))
}

pub fn argmax_rows(scores: &Matrix) -> Vec<usize> {
    (0..scores.rows())
        .map(|t| {
            let row = scores.row(t);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
