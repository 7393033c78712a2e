use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::ObjectKind;
use crate::nn::{NeuralModel, TrainConfig};
use crate::simulator::Normalization;

use super::autoencoder::{AutoencoderKind, Autoencoders};
use super::ensemble::Ensemble;
use super::{EstimatorError, Result};

pub const BUNDLE_VERSION: u32 = 1;
pub const METADATA_FILE: &str = "metadata.json";
pub const NAIVE_FILE: &str = "naive.json";
pub const ENCODER_FILE: &str = "encoder.json";
pub const REGRESSION_FILE: &str = "regression.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub version: u32,
    pub object: ObjectKind,
    pub normalization: Normalization,
    /// Display name of each output class.
    pub classes: Vec<String>,
    pub autoencoder_training: TrainConfig,
    pub classifier_training: TrainConfig,
    /// SHA-256 over both training configurations.
    pub config_hash: String,
}

pub fn config_hash(autoencoder: &TrainConfig, classifier: &TrainConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(autoencoder).expect("config serializes"));
    h.update(serde_json::to_vec(classifier).expect("config serializes"));
    hex::encode(h.finalize())
}

impl BundleMeta {
    pub fn new(
        object: ObjectKind,
        normalization: Normalization,
        autoencoder_training: TrainConfig,
        classifier_training: TrainConfig,
    ) -> Self {
        Self {
            version: BUNDLE_VERSION,
            object,
            normalization,
            classes: ["0", "1", "2", "3", "4+"].map(String::from).to_vec(),
            config_hash: config_hash(&autoencoder_training, &classifier_training),
            autoencoder_training,
            classifier_training,
        }
    }
}

impl Autoencoders {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for kind in AutoencoderKind::ALL {
            self.get(kind).save(dir.join(kind.file_name()))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let load = |kind: AutoencoderKind| -> Result<NeuralModel> {
            let m = NeuralModel::load(dir.join(kind.file_name()))?;
            if !m.same_architecture(&super::autoencoder::build_autoencoder(0)) {
                return Err(EstimatorError::ShapeMismatch(format!(
                    "{} is not a tactile autoencoder",
                    kind.file_name()
                )));
            }
            Ok(m)
        };
        Ok(Self {
            palm: load(AutoencoderKind::Palm)?,
            fixed: load(AutoencoderKind::Fixed)?,
            moving: load(AutoencoderKind::Moving)?,
        })
    }
}

/// Writes three classifier files, three autoencoder files and the metadata.
pub fn save_bundle(dir: impl AsRef<Path>, ensemble: &Ensemble, meta: &BundleMeta) -> Result<()> {
    let dir = dir.as_ref();
    ensemble.autoencoders.save(dir)?;
    ensemble.naive.save(dir.join(NAIVE_FILE))?;
    ensemble.encoder.save(dir.join(ENCODER_FILE))?;
    ensemble.regression.save(dir.join(REGRESSION_FILE))?;
    std::fs::write(dir.join(METADATA_FILE), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<(Ensemble, BundleMeta)> {
    let dir = dir.as_ref();
    let meta: BundleMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(METADATA_FILE))?)?;
    if meta.version != BUNDLE_VERSION {
        return Err(EstimatorError::Bundle(format!("unsupported bundle version {}", meta.version)));
    }
    let ens = Ensemble {
        autoencoders: Autoencoders::load(dir)?,
        naive: NeuralModel::load(dir.join(NAIVE_FILE))?,
        encoder: NeuralModel::load(dir.join(ENCODER_FILE))?,
        regression: NeuralModel::load(dir.join(REGRESSION_FILE))?,
        normalization: meta.normalization,
    };
    // reject bundles whose members do not fit the feature layout
    ens.check_architecture()?;
    Ok((ens, meta))
}
