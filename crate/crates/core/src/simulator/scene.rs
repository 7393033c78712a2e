use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{convex_hull, ConvexHull, ObjectKind, ObjectSpec};
use crate::kinematics::{
    finger_heading, forward_kinematics, sensor_frames, HandGeometry, HandPose, Point, TactileRegion,
    POSE_LEN, TACTILE_LEN,
};

use super::{Result, SimError};

/// World up expressed in the palm frame. Grasps are simulated palm-up.
pub const UP: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    #[default]
    SimLike,
    RealLike,
}

impl Domain {
    pub fn noise_multiplier(self) -> f64 {
        match self {
            Domain::SimLike => 1.0,
            Domain::RealLike => 3.0,
        }
    }

    /// Chance that a frame carries a constant sensor offset.
    pub fn offset_probability(self) -> f64 {
        match self {
            Domain::SimLike => 0.0,
            Domain::RealLike => 0.3,
        }
    }

    /// Largest magnitude any single reading can be perturbed by.
    pub fn noise_bound(self, noise: f64) -> f64 {
        3.0 * noise * self.noise_multiplier()
    }
}

impl FromStr for Domain {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sim_like" | "sim" => Ok(Domain::SimLike),
            "real_like" | "real" => Ok(Domain::RealLike),
            other => Err(format!("unknown domain `{other}` (expected sim_like or real_like)")),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::SimLike => "sim_like",
            Domain::RealLike => "real_like",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub object: ObjectSpec,
    pub pile_size: u32,
    /// Standard deviation of sensor noise in normalised units.
    pub noise: f64,
    pub seed: u64,
    pub domain: Domain,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.object.validate()?;
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(SimError::InvalidScene(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

/// Forces mapping to a full-scale normalised reading of 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorScales {
    /// Newtons per tactile cell.
    pub tactile: f64,
    /// Newtons per finger strain gauge.
    pub strain: f64,
}

impl Default for SensorScales {
    fn default() -> Self {
        Self {
            tactile: 0.05,
            strain: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub domain: Domain,
    pub object: ObjectKind,
}

/// One simulated grasp. `strain` follows the finger order of the tactile
/// regions: fixed finger, moving finger 1, moving finger 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspSample {
    pub pose: [f64; POSE_LEN],
    pub tactile: Vec<f64>,
    pub strain: [f64; 3],
    pub label: u32,
    pub meta: SampleMeta,
}

impl GraspSample {
    pub fn hand_pose(&self) -> HandPose {
        HandPose::new(
            self.pose[0],
            [self.pose[1], self.pose[2], self.pose[3]],
            [self.pose[4], self.pose[5], self.pose[6]],
        )
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.tactile.len() != TACTILE_LEN {
            return Err(format!("tactile has {} values, expected {TACTILE_LEN}", self.tactile.len()));
        }
        if self.pose.iter().any(|v| !v.is_finite()) {
            return Err("non-finite pose value".into());
        }
        if self.tactile.iter().chain(&self.strain).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("sensor readings must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedObject {
    pub center: Point,
    /// Indices of tactile cells touching the object.
    pub contacts: Vec<usize>,
    pub supported: bool,
    pub retained: bool,
}

/// Noise-free outcome of one grasp.
#[derive(Debug, Clone)]
pub struct Trial {
    /// Pose after the fingers closed on the pile.
    pub pose: HandPose,
    pub objects: Vec<PlacedObject>,
    /// Per-cell normal force in newtons with the hand still in the pile.
    pub load_before: Vec<f64>,
    /// Per-cell normal force in newtons once lifted: retained objects only.
    pub load_after: Vec<f64>,
}

impl Trial {
    pub fn retained(&self) -> u32 {
        self.objects.iter().filter(|o| o.retained).count() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulator {
    pub geometry: HandGeometry,
    pub scales: SensorScales,
    /// Contact when a cell is within this fraction of the object's
    /// characteristic size from its surface.
    pub contact_gap: f64,
    /// Fingers stop closing once a link is this close to an object, metres.
    pub stop_gap: f64,
    pub closing_step: f64,
    pub max_attempts: usize,
    /// Drop positions extend this many object extents beyond the hand.
    pub placement_margin: f64,
}

impl Default for Simulator {
    fn default() -> Self {
        Self {
            geometry: HandGeometry::default(),
            scales: SensorScales::default(),
            contact_gap: 0.5,
            stop_gap: 0.002,
            closing_step: 1f64.to_radians(),
            max_attempts: 200,
            placement_margin: 1.0,
        }
    }
}

const LINK_SAMPLES: usize = 9;

/// Distance from `q` to the object's surface; negative inside.
fn surface_gap(obj: &ObjectSpec, center: &Point, q: &Point) -> f64 {
    match obj.kind {
        ObjectKind::Sphere => (q - center).norm() - obj.characteristic_size,
        ObjectKind::Cube => {
            let h = obj.characteristic_size / 2.0;
            let d = (q - center).map(|v| v.abs() - h);
            let outside = d.map(|v| v.max(0.0)).norm();
            outside + d.max().min(0.0)
        }
    }
}

impl Simulator {
    pub fn new(geometry: HandGeometry) -> Self {
        Self {
            geometry,
            ..Self::default()
        }
    }

    /// Drops objects one at a time at uniform horizontal positions around the
    /// hand; each falls until it rests on the floor (z = half extent) or on a
    /// previously placed object.
    fn place(&self, pregrasp: &HandPose, scene: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Point>> {
        let obj = &scene.object;
        let e = obj.extent();
        let h = e / 2.0;
        let pts = forward_kinematics(pregrasp, &self.geometry)?.points();
        let lo = pts.iter().fold(Vector3::repeat(f64::INFINITY), |m, p| m.inf(&p.coords));
        let hi = pts.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |m, p| m.sup(&p.coords));
        let top = hi.z.max(e) + e;
        let m = self.placement_margin * e;

        let mut placed: Vec<Point> = Vec::with_capacity(scene.pile_size as usize);
        for _ in 0..scene.pile_size {
            let mut ok = false;
            for _ in 0..self.max_attempts {
                let x = rng.random_range(lo.x - m..=hi.x + m);
                let y = rng.random_range(lo.y - m..=hi.y + m);
                let mut z = h;
                for c in &placed {
                    let (dx, dy) = (x - c.x, y - c.y);
                    let rest = match obj.kind {
                        ObjectKind::Sphere => {
                            let d2 = dx * dx + dy * dy;
                            (d2 < e * e).then(|| c.z + (e * e - d2).sqrt())
                        }
                        ObjectKind::Cube => (dx.abs() < e && dy.abs() < e).then_some(c.z + e),
                    };
                    if let Some(r) = rest {
                        z = z.max(r);
                    }
                }
                if z + h <= top {
                    placed.push(Point::new(x, y, z));
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(SimError::PlacementFailure {
                    placed: placed.len() as u32,
                    requested: scene.pile_size,
                });
            }
        }
        Ok(placed)
    }

    fn link_gap(&self, obj: &ObjectSpec, centers: &[Point], from: Point, dir: Vector3<f64>, len: f64) -> f64 {
        let mut gap = f64::INFINITY;
        for k in 0..LINK_SAMPLES {
            let q = from + dir * (len * k as f64 / (LINK_SAMPLES - 1) as f64);
            for c in centers {
                gap = gap.min(surface_gap(obj, c, &q));
            }
        }
        gap
    }

    /// Closes each finger from the pre-grasp pose until a link touches an
    /// object or its joint limit is reached. When the proximal link is
    /// blocked, the distal link keeps closing on its own.
    pub fn close_fingers(&self, pregrasp: &HandPose, obj: &ObjectSpec, centers: &[Point]) -> HandPose {
        let g = &self.geometry;
        let lim = &g.limits;
        let mut pose = *pregrasp;
        for f in 0..3 {
            let [bx, by] = g.finger_base_offsets[f];
            let base = Point::new(bx, by, 0.0);
            let heading = finger_heading(f, pose.spread);
            let dir = |theta: f64| heading * theta.cos() + Vector3::z() * theta.sin();
            let gaps = |tp: f64, td: f64| {
                let dip = base + dir(tp) * g.proximal_length;
                (
                    self.link_gap(obj, centers, base, dir(tp), g.proximal_length),
                    self.link_gap(obj, centers, dip, dir(tp + td), g.distal_length),
                )
            };

            let (mut tp, mut td) = (pose.proximal[f], pose.distal[f]);
            let (mut gp, mut gd) = gaps(tp, td);
            while gp > self.stop_gap && gd > self.stop_gap && tp < lim.max_proximal {
                tp = (tp + self.closing_step).min(lim.max_proximal);
                td = (tp * g.distal_coupling_ratio).clamp(td, lim.max_distal);
                (gp, gd) = gaps(tp, td);
            }
            if gp <= self.stop_gap {
                while gd > self.stop_gap && td < lim.max_distal {
                    td = (td + self.closing_step).min(lim.max_distal);
                    gd = gaps(tp, td).1;
                }
            }
            pose.proximal[f] = tp;
            pose.distal[f] = td;
        }
        pose
    }

    /// Places the pile, closes the hand and resolves contacts and loads.
    pub fn simulate_trial(&self, pregrasp: &HandPose, scene: &SceneConfig) -> Result<Trial> {
        scene.validate()?;
        pregrasp.validate(&self.geometry.limits)?;
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        let obj = &scene.object;
        let centers = self.place(pregrasp, scene, &mut rng)?;
        let pose = self.close_fingers(pregrasp, obj, &centers);

        let frames = sensor_frames(&pose, &self.geometry)?;
        let hull: Option<ConvexHull> = convex_hull(&forward_kinematics(&pose, &self.geometry)?.points()).ok();
        let reach = self.contact_gap * obj.characteristic_size;
        let weight = obj.weight();

        let mut load_before = vec![0.0; TACTILE_LEN];
        let mut load_after = vec![0.0; TACTILE_LEN];
        let mut objects = Vec::with_capacity(centers.len());
        for c in centers {
            let contacts: Vec<usize> = frames
                .iter()
                .enumerate()
                .filter(|(_, fr)| {
                    (c - fr.position).dot(&fr.normal) > 0.0 && surface_gap(obj, &c, &fr.position) <= reach
                })
                .map(|(i, _)| i)
                .collect();
            let support: Vec<usize> = contacts
                .iter()
                .copied()
                .filter(|&i| frames[i].normal.dot(&UP) > 0.0)
                .collect();
            let opposed = contacts.iter().enumerate().any(|(k, &a)| {
                contacts[k + 1..]
                    .iter()
                    .any(|&b| frames[a].normal.dot(&frames[b].normal) < 0.0)
            });
            let inside = hull.as_ref().is_some_and(|h| h.contains(&c, 0.0));
            let supported = !support.is_empty();
            let retained = inside && opposed && supported;

            if supported {
                // minimum-norm shares whose vertical components sum to the load
                let norm2: f64 = support.iter().map(|&i| frames[i].normal.dot(&UP).powi(2)).sum();
                let carried = if retained { weight } else { weight / 2.0 };
                for &i in &support {
                    let share = frames[i].normal.dot(&UP) / norm2;
                    load_before[i] += carried * share;
                    if retained {
                        load_after[i] += weight * share;
                    }
                }
            }
            objects.push(PlacedObject {
                center: c,
                contacts,
                supported,
                retained,
            });
        }
        Ok(Trial {
            pose,
            objects,
            load_before,
            load_after,
        })
    }

    /// Converts raw loads to normalised, noisy tactile and strain readings.
    fn render(&self, load: &[f64], scene: &SceneConfig, rng: &mut ChaCha8Rng) -> (Vec<f64>, [f64; 3]) {
        let sigma = scene.noise * scene.domain.noise_multiplier();
        let bound = 3.0 * sigma;
        let offset = if rng.random_bool(scene.domain.offset_probability()) {
            1.5 * sigma
        } else {
            0.0
        };
        let mut read = |value: f64| {
            let g: f64 = if sigma > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
            let e = (offset + sigma * g).clamp(-bound, bound);
            (value.min(1.0) + e).max(0.0)
        };
        let tactile: Vec<f64> = load.iter().map(|f| read(f / self.scales.tactile)).collect();
        let strain = [
            TactileRegion::FixedFinger,
            TactileRegion::MovingFinger1,
            TactileRegion::MovingFinger2,
        ]
        .map(|r| read(load[r.range()].iter().sum::<f64>() / self.scales.strain));
        (tactile, strain)
    }

    fn sample(&self, trial: &Trial, load: &[f64], scene: &SceneConfig, stream: u64) -> GraspSample {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream(stream);
        let (tactile, strain) = self.render(load, scene, &mut rng);
        GraspSample {
            pose: trial.pose.to_vec(),
            tactile,
            strain,
            label: trial.retained(),
            meta: SampleMeta {
                seed: scene.seed,
                domain: scene.domain,
                object: scene.object.kind,
            },
        }
    }

    /// Readings taken with the hand closed in the pile, before lifting.
    pub fn simulate_grasp(&self, pregrasp: &HandPose, scene: &SceneConfig) -> Result<GraspSample> {
        let trial = self.simulate_trial(pregrasp, scene)?;
        Ok(self.sample(&trial, &trial.load_before, scene, 1))
    }

    /// Readings after lifting, when only retained objects load the hand.
    pub fn simulate_lifted(&self, pregrasp: &HandPose, scene: &SceneConfig) -> Result<GraspSample> {
        let trial = self.simulate_trial(pregrasp, scene)?;
        Ok(self.sample(&trial, &trial.load_after, scene, 2))
    }

    /// Both phases of the same grasp.
    pub fn simulate_both(&self, pregrasp: &HandPose, scene: &SceneConfig) -> Result<(GraspSample, GraspSample)> {
        let trial = self.simulate_trial(pregrasp, scene)?;
        Ok((
            self.sample(&trial, &trial.load_before, scene, 1),
            self.sample(&trial, &trial.load_after, scene, 2),
        ))
    }
}
