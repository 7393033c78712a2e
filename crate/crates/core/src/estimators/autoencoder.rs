use serde::{Deserialize, Serialize};

use crate::kinematics::{TactileRegion, CELLS_PER_REGION, GRID_COLS, GRID_ROWS};
use crate::nn::{train, LayerSpec, Loss, NeuralModel, Tensor, TrainConfig, TrainSet};
use crate::simulator::GraspSample;

use super::{EstimatorError, Result};

pub const CODE_LEN: usize = 6;
/// Number of leading layers forming the encoder.
pub const ENCODER_LAYERS: usize = 9;

/// The three autoencoders: palm, fixed finger, and one shared by both
/// moving fingers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoencoderKind {
    Palm,
    Fixed,
    Moving,
}

impl AutoencoderKind {
    pub const ALL: [AutoencoderKind; 3] = [AutoencoderKind::Palm, AutoencoderKind::Fixed, AutoencoderKind::Moving];

    pub fn for_region(region: TactileRegion) -> Self {
        match region {
            TactileRegion::Palm => AutoencoderKind::Palm,
            TactileRegion::FixedFinger => AutoencoderKind::Fixed,
            TactileRegion::MovingFinger1 | TactileRegion::MovingFinger2 => AutoencoderKind::Moving,
        }
    }

    pub fn regions(self) -> &'static [TactileRegion] {
        match self {
            AutoencoderKind::Palm => &[TactileRegion::Palm],
            AutoencoderKind::Fixed => &[TactileRegion::FixedFinger],
            AutoencoderKind::Moving => &[TactileRegion::MovingFinger1, TactileRegion::MovingFinger2],
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            AutoencoderKind::Palm => "ae_palm.json",
            AutoencoderKind::Fixed => "ae_fixed.json",
            AutoencoderKind::Moving => "ae_moving.json",
        }
    }
}

/// Convolutional autoencoder for one 6x4 tactile frame: 24 in, 6-value
/// code, 24 out.
pub fn build_autoencoder(seed: u64) -> NeuralModel {
    use LayerSpec::*;
    let layers = vec![
        Reshape {
            shape: vec![GRID_ROWS, GRID_COLS, 1],
        },
        Conv2d { filters: 12 },
        Relu,
        Conv2d { filters: 6 },
        Relu,
        MaxPool2x2,
        Flatten,
        Dropout { rate: 0.5 },
        Dense { units: CODE_LEN },
        Dense { units: 36 },
        Reshape { shape: vec![3, 2, 6] },
        ConvTranspose2d { filters: 6 },
        Relu,
        ConvTranspose2d { filters: 12 },
        Relu,
        Upsample2x2,
        ConvTranspose2d { filters: 1 },
        Flatten,
    ];
    NeuralModel::new(vec![CELLS_PER_REGION], layers, seed).expect("autoencoder layer chain is consistent")
}

/// Frames of `regions` from every sample, one row each.
pub fn region_frames(samples: &[&GraspSample], regions: &[TactileRegion]) -> Tensor {
    let mut data = Vec::with_capacity(samples.len() * regions.len() * CELLS_PER_REGION);
    for r in regions {
        for s in samples {
            data.extend_from_slice(&s.tactile[r.range()]);
        }
    }
    Tensor {
        shape: vec![samples.len() * regions.len(), CELLS_PER_REGION],
        data,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoders {
    pub palm: NeuralModel,
    pub fixed: NeuralModel,
    pub moving: NeuralModel,
}

impl Autoencoders {
    pub fn new(seed: u64) -> Self {
        Self {
            palm: build_autoencoder(seed),
            fixed: build_autoencoder(seed.wrapping_add(1)),
            moving: build_autoencoder(seed.wrapping_add(2)),
        }
    }

    pub fn get(&self, kind: AutoencoderKind) -> &NeuralModel {
        match kind {
            AutoencoderKind::Palm => &self.palm,
            AutoencoderKind::Fixed => &self.fixed,
            AutoencoderKind::Moving => &self.moving,
        }
    }

    pub fn get_mut(&mut self, kind: AutoencoderKind) -> &mut NeuralModel {
        match kind {
            AutoencoderKind::Palm => &mut self.palm,
            AutoencoderKind::Fixed => &mut self.fixed,
            AutoencoderKind::Moving => &mut self.moving,
        }
    }

    pub fn encoder(&self, region: TactileRegion) -> NeuralModel {
        self.get(AutoencoderKind::for_region(region)).slice(0..ENCODER_LAYERS)
    }

    /// Codes for a batch of 24-value frames of `region`, inference mode.
    pub fn encode(&self, region: TactileRegion, frames: &Tensor) -> Result<Tensor> {
        Ok(self.encoder(region).forward(frames)?)
    }
}

/// Trains the three autoencoders on reconstruction MSE. The moving model
/// sees frames from both moving fingers. Returns per-model loss histories
/// in [`AutoencoderKind::ALL`] order.
pub fn train_autoencoders(
    samples: &[&GraspSample],
    config: &TrainConfig,
) -> Result<(Autoencoders, [Vec<f64>; 3])> {
    if samples.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let mut aes = Autoencoders::new(config.seed);
    let mut histories: [Vec<f64>; 3] = Default::default();
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = AutoencoderKind::ALL
            .iter()
            .zip([&mut aes.palm, &mut aes.fixed, &mut aes.moving])
            .enumerate()
            .map(|(k, (kind, model))| {
                let frames = region_frames(samples, kind.regions());
                let cfg = TrainConfig {
                    loss: Loss::Mse,
                    oversample: false,
                    seed: config.seed.wrapping_add(10 + k as u64),
                    ..config.clone()
                };
                scope.spawn(move || train(model, &TrainSet::new(frames.clone(), frames), &cfg))
            })
            .collect();
        for (h, out) in handles.into_iter().zip(histories.iter_mut()) {
            *out = h.join().expect("training thread panicked")?;
        }
        Ok(())
    })?;
    Ok((aes, histories))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_audit() {
        let ae = build_autoencoder(0);
        let shapes = ae.shapes();
        assert_eq!(shapes[0], vec![24]);
        assert_eq!(shapes[ENCODER_LAYERS], vec![CODE_LEN]);
        assert_eq!(shapes[6], vec![3, 2, 6]);
        assert_eq!(ae.output_shape(), vec![24]);
        let enc = ae.slice(0..ENCODER_LAYERS);
        assert_eq!(enc.output_shape(), vec![CODE_LEN]);
    }

    #[test]
    fn untrained_forward_is_finite() {
        let ae = build_autoencoder(3);
        let x = Tensor {
            shape: vec![5, 24],
            data: (0..120).map(|i| ((i * 37) % 11) as f64 / 11.0).collect(),
        };
        let y = ae.forward(&x).unwrap();
        assert!(y.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn moving_fingers_share_one_encoder() {
        let aes = Autoencoders::new(1);
        assert!(aes
            .encoder(TactileRegion::MovingFinger1)
            .same_weights(&aes.encoder(TactileRegion::MovingFinger2)));
        assert!(!aes
            .encoder(TactileRegion::Palm)
            .same_weights(&aes.encoder(TactileRegion::FixedFinger)));
    }

    #[test]
    fn empty_training_set() {
        assert!(matches!(
            train_autoencoders(&[], &TrainConfig::default()),
            Err(EstimatorError::EmptyDataset)
        ));
    }
}
