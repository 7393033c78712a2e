//! Object count from the vertical component of tactile contact forces.
//!
//! Each tactile reading is taken as a normal-force magnitude along its
//! sensor's inward normal. Summing the components along world-up gives the
//! load the hand carries; a least-squares line maps that load to a count.

use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{self, HandGeometry, HandPose, KinematicsError, TACTILE_LEN};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForceError {
    #[error("expected {TACTILE_LEN} tactile readings, got {0}")]
    TactileLength(usize),
    #[error("tactile reading {index} is negative or non-finite ({value})")]
    InvalidReading { index: usize, value: f64 },
    #[error("degenerate regression data: {0}")]
    DegenerateData(&'static str),
    #[error("unsupported force model version {0}")]
    Version(u32),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ForceError>;

/// Whether readings were taken with the hand still in the pile or after
/// lifting it clear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LiftPhase {
    #[default]
    BeforeLift,
    AfterLift,
}

impl std::str::FromStr for LiftPhase {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "before_lift" | "before" => Ok(LiftPhase::BeforeLift),
            "after_lift" | "after" => Ok(LiftPhase::AfterLift),
            other => Err(format!("unknown lift phase `{other}`")),
        }
    }
}

/// Sum of reading-weighted sensor normals projected on world-up.
///
/// `palm_to_world` rotates palm-frame vectors into the world frame; world-up
/// is `+z`. The result is negative when loaded sensors face downward.
pub fn vertical_force(
    tactile: &[f64],
    pose: &HandPose,
    geom: &HandGeometry,
    palm_to_world: &Rotation3<f64>,
) -> Result<f64> {
    if tactile.len() != TACTILE_LEN {
        return Err(ForceError::TactileLength(tactile.len()));
    }
    if let Some((index, &value)) = tactile
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
    {
        return Err(ForceError::InvalidReading { index, value });
    }
    let up_in_palm = palm_to_world.inverse() * Vector3::z();
    let frames = kinematics::sensor_frames(pose, geom)?;
    Ok(frames
        .iter()
        .zip(tactile)
        .map(|(fr, t)| t * up_in_palm.dot(&fr.normal))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCountModel {
    pub version: u32,
    /// Objects per newton.
    pub slope: f64,
    pub intercept: f64,
    pub trained_on: LiftPhase,
}

impl LinearCountModel {
    pub fn predict(&self, force: f64) -> u32 {
        predict_count(self, force)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(ForceError::Version(m.version));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Ordinary least squares of count on force.
pub fn fit_linear(samples: &[(f64, f64)], trained_on: LiftPhase) -> Result<LinearCountModel> {
    if samples.len() < 2 {
        return Err(ForceError::DegenerateData("need at least two samples"));
    }
    if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(ForceError::DegenerateData("non-finite sample"));
    }
    let n = samples.len() as f64;
    let mean_x = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (sxx, sxy) = samples.iter().fold((0.0, 0.0), |(sxx, sxy), (x, y)| {
        let dx = x - mean_x;
        (sxx + dx * dx, sxy + dx * (y - mean_y))
    });
    if sxx == 0.0 {
        return Err(ForceError::DegenerateData("all forces identical"));
    }
    let slope = sxy / sxx;
    Ok(LinearCountModel {
        version: MODEL_VERSION,
        slope,
        intercept: mean_y - slope * mean_x,
        trained_on,
    })
}

/// `max(0, round(slope * force + intercept))`, ties away from zero.
pub fn predict_count(model: &LinearCountModel, force: f64) -> u32 {
    let v = (model.slope * force + model.intercept).round();
    if v.is_nan() || v <= 0.0 {
        0
    } else {
        v.min(u32::MAX as f64) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::TactileRegion;

    const BALL_WEIGHT: f64 = 0.0265;

    #[test]
    fn exact_line() {
        let m = fit_linear(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)], LiftPhase::AfterLift).unwrap();
        assert!((m.slope - 1.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
    }

    #[test]
    fn identical_forces_are_degenerate() {
        assert!(matches!(
            fit_linear(&[(1.0, 0.0), (1.0, 3.0)], LiftPhase::BeforeLift),
            Err(ForceError::DegenerateData(_))
        ));
        assert!(fit_linear(&[(1.0, 0.0)], LiftPhase::BeforeLift).is_err());
    }

    #[test]
    fn prediction_rounds_and_clamps() {
        let m = LinearCountModel {
            version: MODEL_VERSION,
            slope: 1.0 / BALL_WEIGHT,
            intercept: 0.0,
            trained_on: LiftPhase::AfterLift,
        };
        assert_eq!(predict_count(&m, 0.0795), 3);
        assert_eq!(predict_count(&m, 0.0), 0);
        let m = LinearCountModel {
            intercept: 0.4,
            ..m
        };
        assert_eq!(predict_count(&m, -0.5), 0);
        let half = LinearCountModel {
            slope: 1.0,
            intercept: 0.0,
            ..m
        };
        assert_eq!(predict_count(&half, 2.5), 3);
    }

    #[test]
    fn zero_readings_give_zero_force() {
        let g = HandGeometry::default();
        let pose = HandPose::coupled(0.3, [0.8, 0.9, 1.0], 1.0 / 3.0);
        let f = vertical_force(&[0.0; TACTILE_LEN], &pose, &g, &Rotation3::identity()).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn palm_up_palm_load() {
        let g = HandGeometry::default();
        let pose = HandPose::coupled(0.0, [0.5; 3], 1.0 / 3.0);
        let mut t = [0.0; TACTILE_LEN];
        for (k, i) in TactileRegion::Palm.range().enumerate() {
            t[i] = if k < 5 { 0.1 } else { 0.0 };
        }
        let f = vertical_force(&t, &pose, &g, &Rotation3::identity()).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
        // flipped palm-down: the same load points against world-up
        let down = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
        let f = vertical_force(&t, &pose, &g, &down).unwrap();
        assert!((f + 0.5).abs() < 1e-12);
    }

    #[test]
    fn bad_readings_are_rejected() {
        let g = HandGeometry::default();
        let pose = HandPose::coupled(0.0, [0.5; 3], 1.0 / 3.0);
        let mut t = [0.0; TACTILE_LEN];
        t[7] = -0.1;
        assert!(matches!(
            vertical_force(&t, &pose, &g, &Rotation3::identity()),
            Err(ForceError::InvalidReading { index: 7, .. })
        ));
        assert!(vertical_force(&t[..10], &pose, &g, &Rotation3::identity()).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = fit_linear(&[(0.0, 0.0), (0.1, 2.0), (0.2, 5.0)], LiftPhase::BeforeLift).unwrap();
        let back = LinearCountModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        let text = m.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(LinearCountModel::from_json(&text), Err(ForceError::Version(9))));
    }
}
