//! Learned count estimators: tactile autoencoders, three classifiers over
//! raw and encoded features, their ensemble, and fine-tuning on new data.

mod autoencoder;
mod bundle;
mod classifier;
mod ensemble;
mod features;

use thiserror::Error;

pub use autoencoder::{
    build_autoencoder, region_frames, train_autoencoders, AutoencoderKind, Autoencoders, CODE_LEN, ENCODER_LAYERS,
};
pub use bundle::{
    config_hash, load_bundle, save_bundle, BundleMeta, BUNDLE_VERSION, ENCODER_FILE, METADATA_FILE, NAIVE_FILE,
    REGRESSION_FILE,
};
pub use classifier::{build_classifier, combine, regression_to_distribution, ClassDistribution, Head};
pub use ensemble::{ensemble_predict, fine_tune, train_classifiers, Ensemble, MemberOutputs};
pub use features::{
    check_record, encode_features, encoded_matrix, naive_features, naive_matrix, ENCODED_DIM, NAIVE_DIM, RECORD_LEN,
    STRAIN_LEN,
};

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("unsupported feature dimension {0} (expected 106 or 34)")]
    InvalidDim(usize),
    #[error("non-finite model output {0}")]
    NonFinite(f64),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EstimatorError>;
