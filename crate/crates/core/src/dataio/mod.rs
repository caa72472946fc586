//! Feature matrices, labels, split definitions and their on-disk formats,
//! plus a seeded synthetic multi-pillar dataset generator.

mod formats;
mod synthetic;

pub use formats::{
    encode_feature_matrix, encode_kernel_cache, load_feature_matrix, load_kernel_cache,
    load_labels, load_split, read_feature_matrix, read_kernel_cache, write_feature_matrix,
    write_kernel_cache, write_labels, write_split, PLRF_HEADER_LEN,
};
pub use synthetic::{
    default_informative_classes, generate_synthetic_pillars, PillarSpec, SyntheticData,
    SyntheticSpec,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("bad magic at byte {offset}: expected {expected:?}, found {found:?}")]
    BadMagic {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("unsupported format version {version} at byte {offset}")]
    UnsupportedVersion { offset: usize, version: u32 },
    #[error("truncated payload: file ends at byte {offset}, needs {expected} bytes")]
    TruncatedPayload { offset: usize, expected: usize },
    #[error("non-finite value at byte {offset}")]
    NonFiniteValue { offset: usize },
    #[error("malformed file at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("invalid feature matrix: {0}")]
    InvalidMatrix(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: cannot parse {text:?}")]
    ParseError { line: usize, text: String },
    #[error("line {line}: negative label")]
    NegativeLabel { line: usize },
    #[error("label file contains no labels")]
    EmptyLabels,
    #[error("line {line}: index {index} listed more than once")]
    DuplicateIndex { line: usize, index: usize },
    #[error("line {line}: unknown split role {role:?} (expected train or test)")]
    UnknownRole { line: usize, role: String },
    #[error("line {line}: index {index} out of range for {n_samples} samples")]
    IndexOutOfRange {
        line: usize,
        index: usize,
        n_samples: usize,
    },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}

/// `n_samples × n_dims` real32 matrix, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n_samples: usize,
    n_dims: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(n_samples: usize, n_dims: usize, values: Vec<f32>) -> Result<Self, DataError> {
        if n_samples == 0 || n_dims == 0 {
            return Err(DataError::InvalidMatrix(format!(
                "shape {n_samples}x{n_dims} has an empty axis"
            )));
        }
        if n_samples.checked_mul(n_dims) != Some(values.len()) {
            return Err(DataError::InvalidMatrix(format!(
                "{} values for shape {n_samples}x{n_dims}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::InvalidMatrix(format!(
                "non-finite value at row {}, column {}",
                i / n_dims,
                i % n_dims
            )));
        }
        Ok(FeatureMatrix {
            n_samples,
            n_dims,
            values,
        })
    }

    /// Rows of `f64` values, downcast to real32.
    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let n_dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_dims) {
            return Err(DataError::InvalidMatrix("ragged rows".into()));
        }
        let values = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(rows.len(), n_dims, values)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n_dims..(i + 1) * self.n_dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.n_dims)
    }

    /// Rows at `indices`, in the given order. Panics on out-of-range indices.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        assert!(!indices.is_empty(), "row selection must be non-empty");
        let mut values = Vec::with_capacity(indices.len() * self.n_dims);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_samples: indices.len(),
            n_dims: self.n_dims,
            values,
        }
    }

    /// Each row scaled to unit Euclidean norm; all-zero rows are left as is.
    pub fn l2_normalized_rows(&self) -> FeatureMatrix {
        let mut values = self.values.clone();
        for row in values.chunks_exact_mut(self.n_dims) {
            let norm = row
                .iter()
                .map(|&v| f64::from(v).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                row.iter_mut()
                    .for_each(|v| *v = (f64::from(*v) / norm) as f32);
            }
        }
        FeatureMatrix { values, ..*self }
    }
}

/// Integer class ids in `[0, n_classes)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelVector {
    /// `n_classes` is `max + 1`.
    pub fn new(labels: Vec<usize>) -> Result<Self, DataError> {
        let n_classes = labels
            .iter()
            .max()
            .map(|m| m + 1)
            .ok_or(DataError::EmptyLabels)?;
        Ok(LabelVector { labels, n_classes })
    }

    /// Explicit class count, for subsets that may not contain the largest id.
    pub fn with_classes(labels: Vec<usize>, n_classes: usize) -> Result<Self, DataError> {
        if labels.is_empty() {
            return Err(DataError::EmptyLabels);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(DataError::InvalidSplit(format!(
                "label {bad} outside [0, {n_classes})"
            )));
        }
        Ok(LabelVector { labels, n_classes })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn distinct_classes(&self) -> usize {
        let mut seen = vec![false; self.n_classes];
        self.labels.iter().for_each(|&l| seen[l] = true);
        seen.into_iter().filter(|&s| s).count()
    }

    /// Labels at `indices`, keeping the parent's class count.
    pub fn subset(&self, indices: &[usize]) -> LabelVector {
        LabelVector {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// One train/test partition of the sample indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitDefinition {
    pub split_id: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl SplitDefinition {
    /// Checks disjointness, range, non-emptiness and that training rows hold ≥ 2 classes.
    pub fn validate(&self, labels: &LabelVector) -> Result<(), DataError> {
        let n = labels.len();
        if self.train_indices.is_empty() || self.test_indices.is_empty() {
            return Err(DataError::InvalidSplit(format!(
                "split {} has an empty train or test set",
                self.split_id
            )));
        }
        let mut role = vec![0u8; n];
        for (tag, set) in [(1u8, &self.train_indices), (2u8, &self.test_indices)] {
            for &i in set {
                if i >= n {
                    return Err(DataError::InvalidSplit(format!(
                        "split {}: index {i} out of range for {n} samples",
                        self.split_id
                    )));
                }
                if role[i] != 0 {
                    return Err(DataError::InvalidSplit(format!(
                        "split {}: index {i} appears more than once",
                        self.split_id
                    )));
                }
                role[i] = tag;
            }
        }
        if labels.subset(&self.train_indices).distinct_classes() < 2 {
            return Err(DataError::InvalidSplit(format!(
                "split {}: training rows contain fewer than 2 classes",
                self.split_id
            )));
        }
        Ok(())
    }
}
