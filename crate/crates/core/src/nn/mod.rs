//! Small sequential neural-network engine: forward/backward kernels for the
//! layer kinds the estimators need, Adam, and a seeded mini-batch trainer.
//! Everything runs in f64.

mod layers;
mod model;
mod optim;
mod tensor;
mod train;

use thiserror::Error;

pub use layers::{LayerSpec, KERNEL};
pub use model::{Gradients, Loss, NeuralModel, Tape, WEIGHTS_VERSION};
pub use optim::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use tensor::Tensor;
pub use train::{balanced_indices, evaluate_loss, train, TrainConfig, TrainSet};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("parameter became non-finite after an update")]
    NonFiniteParameter,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported weight file version {0}")]
    Version(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
