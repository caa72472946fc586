//! Multiple kernel learning fusion engine for multi-stream ("pillar") feature sets.
//!
//! Each pillar is a feature matrix (deep-network activations or Fisher-encoded
//! local descriptors). Pillars are turned into Gram matrices, classified with
//! one-vs-rest soft-margin SVMs trained by SMO, and fused by learning a
//! non-negative kernel weighting: either the cutting-plane SILP scheme with an
//! L1 simplex master LP, or the closed-form L2-norm alternating scheme.
//!
//! The [`pipeline`] module runs the three-split evaluation protocol end to end.

pub mod dataio;
pub mod fisher;
pub mod kernels;
pub mod lp;
pub mod matrix;
pub mod mkl;
pub mod pipeline;
pub mod svm;

mod binio;

pub use dataio::{FeatureMatrix, LabelVector, SplitDefinition, SyntheticSpec};
pub use kernels::{KernelMatrix, KernelParams};
pub use matrix::Matrix;
pub use mkl::{MklModel, NormMode};
pub use svm::{BinarySvmModel, MulticlassSvmModel};

/// Library-wide error, wrapping the per-module error types.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] dataio::DataError),
    #[error(transparent)]
    Kernel(#[from] kernels::KernelError),
    #[error(transparent)]
    Svm(#[from] svm::SvmError),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
    #[error(transparent)]
    Mkl(#[from] mkl::MklError),
    #[error(transparent)]
    Fisher(#[from] fisher::FisherError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
