//! Dense-tensor reverse-mode automatic differentiation with MLP layers and
//! first-order optimizers. Everything downstream differentiates through this.

mod mlp;
mod optim;
mod tape;
mod tensor;

pub use mlp::{Activation, MlpParams, MlpSpec};
pub use optim::{Optimizer, OptimizerConfig, OptimizerMethod};
pub use tape::{sigmoid, softplus as softplus_scalar, NodeId, Tape};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} domain violation: input {value} outside valid domain")]
    Domain { op: &'static str, value: f64 },
    #[error("backward requires a scalar output, got shape {shape:?}")]
    NonScalarBackward { shape: Vec<usize> },
    #[error("gradient missing for parameter {index}")]
    MissingGrad { index: usize },
    #[error("invalid MLP spec: {reason}")]
    InvalidSpec { reason: String },
    #[error("learning rate must be positive, got {0}")]
    NonPositiveLearningRate(f64),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
