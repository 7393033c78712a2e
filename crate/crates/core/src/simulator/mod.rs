//! Quasi-static grasp simulator: drops a pile of identical objects around an
//! open hand, closes the fingers until they meet the pile, decides which
//! objects are held and renders tactile and strain readings.

mod dataset;
mod downsample;
mod grid;
mod scene;

use thiserror::Error;

pub use dataset::{
    class_histogram, count_class, derive_seed, generate_dataset, read_samples, sidecar_path, Dataset,
    DatasetMeta, Normalization, Splits, DATASET_VERSION, NUM_CLASSES,
};
pub use downsample::{default_mapping, downsample_tactile, validate_mapping, CellMapping, FINE_CELLS, FINE_ROW_WIDTHS};
pub use grid::{dedupe_symmetric, pregrasp_grid, swap_spread_fingers};
pub use scene::{
    Domain, GraspSample, PlacedObject, SampleMeta, SceneConfig, SensorScales, Simulator, Trial, UP,
};

use crate::geometry::GeometryError;
use crate::kinematics::KinematicsError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("could only place {placed} of {requested} objects")]
    PlacementFailure { placed: u32, requested: u32 },
    #[error("invalid tactile mapping: {0}")]
    InvalidMapping(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("bad sample on line {line}: {message}")]
    Data { line: usize, message: String },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
