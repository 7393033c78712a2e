//! Evaluation metrics, estimator evaluation and end-to-end orchestration.

mod evaluate;
mod metrics;
mod run;

use thiserror::Error;

pub use evaluate::{evaluate_estimator, fit_force_model, grasp_force, majority_class, Estimator};
pub use metrics::{confusion_matrix, rmse, rmse_from_confusion, Confusion, EvalReport, PerClass};
pub use run::{generate, run_pipeline, sample_poses, write_report, DataConfig, PipelineConfig, PipelineRun};

use crate::estimators::EstimatorError;
use crate::force::ForceError;
use crate::geometry::GeometryError;
use crate::kinematics::KinematicsError;
use crate::nn::NnError;
use crate::simulator::SimError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{predictions} predictions for {truths} ground-truth values")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("the {0} estimator has not been trained")]
    UntrainedModel(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Force(#[from] ForceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;
