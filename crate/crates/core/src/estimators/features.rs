use crate::kinematics::{TactileRegion, POSE_LEN, TACTILE_LEN};
use crate::nn::Tensor;
use crate::simulator::{GraspSample, Normalization};

use super::autoencoder::{region_frames, Autoencoders, CODE_LEN};
use super::{EstimatorError, Result};

pub const STRAIN_LEN: usize = 3;
/// pose + tactile + strain
pub const NAIVE_DIM: usize = POSE_LEN + TACTILE_LEN + STRAIN_LEN;
/// pose + four region codes + strain
pub const ENCODED_DIM: usize = POSE_LEN + 4 * CODE_LEN + STRAIN_LEN;
/// A stored record: every feature plus the label.
pub const RECORD_LEN: usize = NAIVE_DIM + 1;

pub fn check_record(sample: &GraspSample) -> Result<()> {
    let len = sample.pose.len() + sample.tactile.len() + sample.strain.len() + 1;
    if len != RECORD_LEN {
        return Err(EstimatorError::InvalidDim(len - 1));
    }
    Ok(())
}

/// `[pose / joint range | 96 tactile | 3 strain]`
pub fn naive_features(sample: &GraspSample, norm: &Normalization) -> Result<Vec<f64>> {
    check_record(sample)?;
    let mut out = Vec::with_capacity(NAIVE_DIM);
    out.extend_from_slice(&norm.pose(&sample.pose));
    out.extend_from_slice(&sample.tactile);
    out.extend_from_slice(&sample.strain);
    Ok(out)
}

pub fn naive_matrix(samples: &[&GraspSample], norm: &Normalization) -> Result<Tensor> {
    let mut data = Vec::with_capacity(samples.len() * NAIVE_DIM);
    for s in samples {
        data.extend(naive_features(s, norm)?);
    }
    Ok(Tensor {
        shape: vec![samples.len(), NAIVE_DIM],
        data,
    })
}

/// `[pose / joint range | palm code | fixed code | moving 1 code | moving 2 code | strain]`,
/// one row per sample.
pub fn encoded_matrix(samples: &[&GraspSample], aes: &Autoencoders, norm: &Normalization) -> Result<Tensor> {
    for s in samples {
        check_record(s)?;
    }
    let codes: Vec<Tensor> = TactileRegion::ALL
        .iter()
        .map(|&r| aes.encode(r, &region_frames(samples, &[r])))
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(samples.len() * ENCODED_DIM);
    for (i, s) in samples.iter().enumerate() {
        data.extend_from_slice(&norm.pose(&s.pose));
        for c in &codes {
            data.extend_from_slice(c.row(i));
        }
        data.extend_from_slice(&s.strain);
    }
    Ok(Tensor {
        shape: vec![samples.len(), ENCODED_DIM],
        data,
    })
}

pub fn encode_features(sample: &GraspSample, aes: &Autoencoders, norm: &Normalization) -> Result<Vec<f64>> {
    Ok(encoded_matrix(&[sample], aes, norm)?.data)
}
