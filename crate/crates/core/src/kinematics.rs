//! Forward kinematics for a three-fingered Barrett-style hand.
//!
//! Frame convention: the palm lies in the `z = 0` plane, centred on the
//! origin, and the fingers flex toward `+z`. Fingers 1 and 2 sit on the
//! `-y` edge of the palm and are driven in opposite directions by the spread
//! joint, so they are mirror images across the `x = 0` plane. Finger 3 is
//! the fixed finger on the `+y` edge.
//!
//! The 7-value pose vector is ordered `[spread, p1, p2, p3, d1, d2, d3]`,
//! where `p*` are the proximal flexion angles and `d*` the coupled distal
//! angles. Distal angles are relative to the proximal link.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = Point3<f64>;

/// Number of joint readings in a hand pose.
pub const POSE_LEN: usize = 7;
/// Tactile cells per region.
pub const CELLS_PER_REGION: usize = 24;
/// Rows of a region's tactile grid (along the finger, or along `y` on the palm).
pub const GRID_ROWS: usize = 6;
/// Columns of a region's tactile grid.
pub const GRID_COLS: usize = 4;
/// Total number of tactile cells on the hand.
pub const TACTILE_LEN: usize = 4 * CELLS_PER_REGION;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("joint {joint} = {value} rad outside [{min}, {max}]")]
    JointLimitViolation {
        joint: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid hand geometry: {0}")]
    InvalidGeometry(String),
    #[error("pose vector must have {POSE_LEN} values, got {0}")]
    PoseLength(usize),
    #[error("geometry config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KinematicsError>;

/// Joint readings of the hand, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    pub spread: f64,
    pub proximal: [f64; 3],
    pub distal: [f64; 3],
}

impl HandPose {
    pub fn new(spread: f64, proximal: [f64; 3], distal: [f64; 3]) -> Self {
        Self {
            spread,
            proximal,
            distal,
        }
    }

    /// Pose with distal joints driven by the proximal joints through `ratio`.
    pub fn coupled(spread: f64, proximal: [f64; 3], ratio: f64) -> Self {
        Self::new(spread, proximal, proximal.map(|p| p * ratio))
    }

    pub fn to_vec(&self) -> [f64; POSE_LEN] {
        let [p1, p2, p3] = self.proximal;
        let [d1, d2, d3] = self.distal;
        [self.spread, p1, p2, p3, d1, d2, d3]
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != POSE_LEN {
            return Err(KinematicsError::PoseLength(values.len()));
        }
        Ok(Self::new(
            values[0],
            [values[1], values[2], values[3]],
            [values[4], values[5], values[6]],
        ))
    }

    /// Checks every joint against `limits`. Non-finite values are rejected.
    pub fn validate(&self, limits: &JointLimits) -> Result<()> {
        check("spread", self.spread, limits.max_spread)?;
        for (name, v) in ["p1", "p2", "p3"].iter().zip(self.proximal) {
            check(name, v, limits.max_proximal)?;
        }
        for (name, v) in ["d1", "d2", "d3"].iter().zip(self.distal) {
            check(name, v, limits.max_distal)?;
        }
        Ok(())
    }
}

fn check(joint: &'static str, value: f64, max: f64) -> Result<()> {
    if value.is_finite() && (0.0..=max).contains(&value) {
        Ok(())
    } else {
        Err(KinematicsError::JointLimitViolation {
            joint,
            value,
            min: 0.0,
            max,
        })
    }
}

/// Upper joint limits in radians. All lower limits are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub max_spread: f64,
    pub max_proximal: f64,
    pub max_distal: f64,
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            max_spread: TAU,
            max_proximal: 140f64.to_radians(),
            max_distal: 48f64.to_radians(),
        }
    }
}

/// Hand dimensions in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandGeometry {
    pub palm_width: f64,
    pub palm_depth: f64,
    pub proximal_length: f64,
    pub distal_length: f64,
    /// Width of the finger links; sets the lateral pitch of finger tactile cells.
    pub finger_width: f64,
    /// Planar positions of the finger bases (the M joints) for fingers 1, 2, 3.
    pub finger_base_offsets: [[f64; 2]; 3],
    pub distal_coupling_ratio: f64,
    pub limits: JointLimits,
}

impl Default for HandGeometry {
    fn default() -> Self {
        Self {
            palm_width: 0.080,
            palm_depth: 0.080,
            proximal_length: 0.070,
            distal_length: 0.056,
            finger_width: 0.024,
            finger_base_offsets: [[-0.025, -0.040], [0.025, -0.040], [0.0, 0.040]],
            distal_coupling_ratio: 1.0 / 3.0,
            limits: JointLimits::default(),
        }
    }
}

/// Flat key-value layout of the geometry config file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GeometryConfig {
    palm_width: f64,
    palm_depth: f64,
    proximal_length: f64,
    distal_length: f64,
    finger_width: f64,
    finger1_base: [f64; 2],
    finger2_base: [f64; 2],
    finger3_base: [f64; 2],
    distal_coupling_ratio: f64,
    max_spread_deg: f64,
    max_proximal_deg: f64,
    max_distal_deg: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        HandGeometry::default().into()
    }
}

impl From<HandGeometry> for GeometryConfig {
    fn from(g: HandGeometry) -> Self {
        Self {
            palm_width: g.palm_width,
            palm_depth: g.palm_depth,
            proximal_length: g.proximal_length,
            distal_length: g.distal_length,
            finger_width: g.finger_width,
            finger1_base: g.finger_base_offsets[0],
            finger2_base: g.finger_base_offsets[1],
            finger3_base: g.finger_base_offsets[2],
            distal_coupling_ratio: g.distal_coupling_ratio,
            max_spread_deg: g.limits.max_spread.to_degrees(),
            max_proximal_deg: g.limits.max_proximal.to_degrees(),
            max_distal_deg: g.limits.max_distal.to_degrees(),
        }
    }
}

impl From<GeometryConfig> for HandGeometry {
    fn from(c: GeometryConfig) -> Self {
        Self {
            palm_width: c.palm_width,
            palm_depth: c.palm_depth,
            proximal_length: c.proximal_length,
            distal_length: c.distal_length,
            finger_width: c.finger_width,
            finger_base_offsets: [c.finger1_base, c.finger2_base, c.finger3_base],
            distal_coupling_ratio: c.distal_coupling_ratio,
            limits: JointLimits {
                max_spread: c.max_spread_deg.to_radians(),
                max_proximal: c.max_proximal_deg.to_radians(),
                max_distal: c.max_distal_deg.to_radians(),
            },
        }
    }
}

impl HandGeometry {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("palm_width", self.palm_width),
            ("palm_depth", self.palm_depth),
            ("proximal_length", self.proximal_length),
            ("distal_length", self.distal_length),
            ("finger_width", self.finger_width),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        let r = self.distal_coupling_ratio;
        if !(r > 0.0 && r <= 1.0) {
            return Err(KinematicsError::InvalidGeometry(format!(
                "distal_coupling_ratio must be in (0, 1], got {r}"
            )));
        }
        if self.finger_base_offsets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(KinematicsError::InvalidGeometry(
                "finger base offsets must be finite".into(),
            ));
        }
        let l = &self.limits;
        for v in [l.max_spread, l.max_proximal, l.max_distal] {
            if !(v.is_finite() && v > 0.0) {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "joint limits must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Parses a flat `key = value` config. Missing keys keep their defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let cfg: GeometryConfig =
            toml::from_str(text).map_err(|e| KinematicsError::Config(e.to_string()))?;
        let geom = HandGeometry::from(cfg);
        geom.validate()?;
        Ok(geom)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(&GeometryConfig::from(self.clone()))
            .expect("flat geometry config always serializes")
    }

    /// Sum of link lengths of one finger.
    pub fn finger_length(&self) -> f64 {
        self.proximal_length + self.distal_length
    }
}

/// Keypoints used to build the grasp hull.
#[derive(Debug, Clone, PartialEq)]
pub struct HandKeypoints {
    /// Metacarpophalangeal joints (finger bases), fingers 1..3.
    pub mcp: [Point; 3],
    /// Distal interphalangeal joints.
    pub dip: [Point; 3],
    /// Fingertips.
    pub tip: [Point; 3],
    pub palm_corners: [Point; 4],
}

impl HandKeypoints {
    /// All 13 points: M1..M3, D1..D3, P1..P3, then the palm corners.
    pub fn points(&self) -> Vec<Point> {
        self.mcp
            .iter()
            .chain(&self.dip)
            .chain(&self.tip)
            .chain(&self.palm_corners)
            .copied()
            .collect()
    }
}

/// Per-finger planar heading at zero flexion. Finger 1 turns with
/// `-spread`, finger 2 with `+spread`, finger 3 is fixed.
pub fn finger_heading(finger: usize, spread: f64) -> Vector3<f64> {
    let angle = match finger {
        0 => -FRAC_PI_2 - spread,
        1 => -FRAC_PI_2 + spread,
        _ => FRAC_PI_2,
    };
    Vector3::new(angle.cos(), angle.sin(), 0.0)
}

/// Direction of a link flexed by `theta` out of the palm plane.
fn link_direction(heading: &Vector3<f64>, theta: f64) -> Vector3<f64> {
    heading * theta.cos() + Vector3::z() * theta.sin()
}

/// Inward surface normal of a link flexed by `theta`.
fn link_normal(heading: &Vector3<f64>, theta: f64) -> Vector3<f64> {
    -heading * theta.sin() + Vector3::z() * theta.cos()
}

pub fn forward_kinematics(pose: &HandPose, geom: &HandGeometry) -> Result<HandKeypoints> {
    pose.validate(&geom.limits)?;
    let mut mcp = [Point::origin(); 3];
    let mut dip = [Point::origin(); 3];
    let mut tip = [Point::origin(); 3];
    for f in 0..3 {
        let [bx, by] = geom.finger_base_offsets[f];
        let heading = finger_heading(f, pose.spread);
        let theta_p = pose.proximal[f];
        let theta_d = theta_p + pose.distal[f];
        mcp[f] = Point::new(bx, by, 0.0);
        dip[f] = mcp[f] + link_direction(&heading, theta_p) * geom.proximal_length;
        tip[f] = dip[f] + link_direction(&heading, theta_d) * geom.distal_length;
    }
    let (hw, hd) = (geom.palm_width / 2.0, geom.palm_depth / 2.0);
    let palm_corners = [
        Point::new(-hw, -hd, 0.0),
        Point::new(hw, -hd, 0.0),
        Point::new(hw, hd, 0.0),
        Point::new(-hw, hd, 0.0),
    ];
    Ok(HandKeypoints {
        mcp,
        dip,
        tip,
        palm_corners,
    })
}

/// The four tactile regions, in the order they appear in the 96-value
/// tactile vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TactileRegion {
    Palm,
    FixedFinger,
    MovingFinger1,
    MovingFinger2,
}

impl TactileRegion {
    pub const ALL: [TactileRegion; 4] = [
        TactileRegion::Palm,
        TactileRegion::FixedFinger,
        TactileRegion::MovingFinger1,
        TactileRegion::MovingFinger2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Slice bounds of this region inside the 96-value tactile vector.
    pub fn range(self) -> std::ops::Range<usize> {
        let start = self.index() * CELLS_PER_REGION;
        start..start + CELLS_PER_REGION
    }

    /// Kinematic finger index (0 = finger 1) carrying this region, if any.
    pub fn finger(self) -> Option<usize> {
        match self {
            TactileRegion::Palm => None,
            TactileRegion::FixedFinger => Some(2),
            TactileRegion::MovingFinger1 => Some(0),
            TactileRegion::MovingFinger2 => Some(1),
        }
    }
}

impl fmt::Display for TactileRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TactileRegion::Palm => "palm",
            TactileRegion::FixedFinger => "fixed_finger",
            TactileRegion::MovingFinger1 => "moving_finger_1",
            TactileRegion::MovingFinger2 => "moving_finger_2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrame {
    pub position: Point,
    /// Unit normal pointing into the grasp space.
    pub normal: Vector3<f64>,
}

/// Positions and inward normals of all 96 tactile cells.
///
/// Each region is a 6x4 grid stored row-major. On the palm, rows run along
/// `y` and columns along `x`. On a finger, rows 0..3 cover the proximal link
/// and rows 3..6 the distal link (base to tip), columns run across the link.
pub fn sensor_frames(pose: &HandPose, geom: &HandGeometry) -> Result<Vec<SensorFrame>> {
    let kp = forward_kinematics(pose, geom)?;
    let mut frames = Vec::with_capacity(TACTILE_LEN);

    for row in 0..GRID_ROWS {
        for col in 0..GRID_COLS {
            let x = -geom.palm_width / 2.0 + (col as f64 + 0.5) * geom.palm_width / GRID_COLS as f64;
            let y = -geom.palm_depth / 2.0 + (row as f64 + 0.5) * geom.palm_depth / GRID_ROWS as f64;
            frames.push(SensorFrame {
                position: Point::new(x, y, 0.0),
                normal: Vector3::z(),
            });
        }
    }

    let link_rows = GRID_ROWS / 2;
    for region in &TactileRegion::ALL[1..] {
        let f = region.finger().expect("finger region");
        let heading = finger_heading(f, pose.spread);
        let lateral = Vector3::z().cross(&heading);
        let links = [
            (kp.mcp[f], pose.proximal[f], geom.proximal_length),
            (kp.dip[f], pose.proximal[f] + pose.distal[f], geom.distal_length),
        ];
        for (origin, theta, length) in links {
            let along = link_direction(&heading, theta);
            let normal = link_normal(&heading, theta);
            for row in 0..link_rows {
                let s = (row as f64 + 0.5) / link_rows as f64 * length;
                for col in 0..GRID_COLS {
                    let t = ((col as f64 + 0.5) / GRID_COLS as f64 - 0.5) * geom.finger_width;
                    frames.push(SensorFrame {
                        position: origin + along * s + lateral * t,
                        normal,
                    });
                }
            }
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(v: f64) -> f64 {
        v.to_radians()
    }

    #[test]
    fn zero_pose_keeps_fingers_in_palm_plane() {
        let g = HandGeometry::default();
        let kp = forward_kinematics(&HandPose::new(0.0, [0.0; 3], [0.0; 3]), &g).unwrap();
        for p in kp.points() {
            assert_eq!(p.z, 0.0);
        }
        // full extension: tip sits one finger length from its base
        for f in 0..3 {
            assert!(((kp.tip[f] - kp.mcp[f]).norm() - g.finger_length()).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_joint_is_rejected() {
        let g = HandGeometry::default();
        let bad = HandPose::new(0.0, [deg(141.0), 0.0, 0.0], [0.0; 3]);
        assert!(matches!(
            forward_kinematics(&bad, &g),
            Err(KinematicsError::JointLimitViolation { joint: "p1", .. })
        ));
        let bad = HandPose::new(0.0, [0.0; 3], [0.0, deg(50.0), 0.0]);
        assert!(forward_kinematics(&bad, &g).is_err());
        let bad = HandPose::new(-0.1, [0.0; 3], [0.0; 3]);
        assert!(forward_kinematics(&bad, &g).is_err());
        let bad = HandPose::new(f64::NAN, [0.0; 3], [0.0; 3]);
        assert!(forward_kinematics(&bad, &g).is_err());
    }

    #[test]
    fn palm_normals_point_up_at_zero_pose() {
        let g = HandGeometry::default();
        let frames = sensor_frames(&HandPose::new(0.0, [0.0; 3], [0.0; 3]), &g).unwrap();
        assert_eq!(frames.len(), TACTILE_LEN);
        for fr in &frames[TactileRegion::Palm.range()] {
            assert_eq!(fr.normal, Vector3::z());
        }
    }

    #[test]
    fn flexed_finger_normal_faces_the_palm() {
        let g = HandGeometry::default();
        let pose = HandPose::new(0.0, [deg(90.0); 3], [0.0; 3]);
        let frames = sensor_frames(&pose, &g).unwrap();
        // fixed finger sits at +y; standing upright its pads face -y
        let n = frames[TactileRegion::FixedFinger.range().start].normal;
        assert!((n - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pose_vector_order() {
        let pose = HandPose::new(0.1, [0.2, 0.3, 0.4], [0.5, 0.6, 0.7]);
        assert_eq!(pose.to_vec(), [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        assert_eq!(HandPose::from_slice(&pose.to_vec()).unwrap(), pose);
        assert!(HandPose::from_slice(&[0.0; 6]).is_err());
    }

    #[test]
    fn config_round_trip_and_partial_override() {
        let g = HandGeometry::default();
        let text = g.to_config_string();
        let back = HandGeometry::from_config_str(&text).unwrap();
        assert!((back.proximal_length - g.proximal_length).abs() < 1e-15);
        assert!((back.limits.max_distal - g.limits.max_distal).abs() < 1e-12);

        let custom = HandGeometry::from_config_str("proximal_length = 0.08\n").unwrap();
        assert_eq!(custom.proximal_length, 0.08);
        assert_eq!(custom.distal_length, g.distal_length);

        assert!(HandGeometry::from_config_str("proximal_length = -1.0").is_err());
        assert!(HandGeometry::from_config_str("distal_coupling_ratio = 1.5").is_err());
        assert!(HandGeometry::from_config_str("wrist_length = 1.0").is_err());
    }

    #[test]
    fn region_ranges_tile_the_tactile_vector() {
        let mut covered = vec![false; TACTILE_LEN];
        for r in TactileRegion::ALL {
            for i in r.range() {
                assert!(!covered[i]);
                covered[i] = true;
            }
        }
        assert!(covered.into_iter().all(|c| c));
    }
}
