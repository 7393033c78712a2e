use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::force::LiftPhase;
use crate::geometry::ObjectSpec;
use crate::kinematics::{HandPose, JointLimits, POSE_LEN};

use super::scene::{Domain, GraspSample, SceneConfig, SensorScales, Simulator};
use super::{Result, SimError};

pub const DATASET_VERSION: u32 = 1;
/// Pile-size classes 0, 1, 2, 3 and "4 or more".
pub const NUM_CLASSES: usize = 5;

pub fn count_class(label: u32) -> usize {
    (label as usize).min(NUM_CLASSES - 1)
}

/// Divisors mapping joint angles to roughly unit range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub pose_scale: [f64; POSE_LEN],
}

impl Normalization {
    pub fn from_limits(limits: &JointLimits) -> Self {
        let p = limits.max_proximal;
        let d = limits.max_distal;
        Self {
            pose_scale: [limits.max_spread, p, p, p, d, d, d],
        }
    }

    pub fn pose(&self, pose: &[f64; POSE_LEN]) -> [f64; POSE_LEN] {
        std::array::from_fn(|i| pose[i] / self.pose_scale[i])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Train/val/test fractions: 60/20/20 for simulated data, 40/10/50 for
    /// real-like data, which is mostly held out.
    pub fn fractions(domain: Domain) -> (f64, f64) {
        match domain {
            Domain::SimLike => (0.6, 0.2),
            Domain::RealLike => (0.4, 0.1),
        }
    }

    pub fn shuffled(n: usize, domain: Domain, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (ft, fv) = Self::fractions(domain);
        let n_train = (n as f64 * ft).round() as usize;
        let n_val = ((n as f64 * fv).round() as usize).min(n - n_train);
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Self { train: idx, val, test }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub object: ObjectSpec,
    pub domain: Domain,
    pub phase: LiftPhase,
    pub scales: SensorScales,
    pub normalization: Normalization,
    pub splits: Splits,
    pub class_histogram: [usize; NUM_CLASSES],
    /// Grasps whose pile could not be placed and were recorded empty.
    pub placement_failures: usize,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<GraspSample>,
    pub meta: DatasetMeta,
}

/// Mixes indices into a base seed (SplitMix64 finaliser).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub fn class_histogram(samples: &[GraspSample]) -> [usize; NUM_CLASSES] {
    let mut h = [0; NUM_CLASSES];
    for s in samples {
        h[count_class(s.label)] += 1;
    }
    h
}

/// Runs `trials_per_pose` grasps for every (scene, pose) pair. Each grasp
/// gets its own seed derived from the scene seed and its indices. A pile
/// that cannot be placed is recorded as an empty-pile grasp.
pub fn generate_dataset(
    sim: &Simulator,
    scenes: &[SceneConfig],
    poses: &[HandPose],
    trials_per_pose: usize,
    phase: LiftPhase,
    split_seed: u64,
) -> Result<Dataset> {
    let first = scenes
        .first()
        .ok_or_else(|| SimError::InvalidScene("no scenes given".into()))?;
    if scenes
        .iter()
        .any(|s| s.domain != first.domain || s.object != first.object)
    {
        return Err(SimError::InvalidScene(
            "all scenes of a dataset must share domain and object".into(),
        ));
    }
    let mut samples = Vec::with_capacity(scenes.len() * poses.len() * trials_per_pose);
    let mut failures = 0;
    for (si, scene) in scenes.iter().enumerate() {
        for (pi, pose) in poses.iter().enumerate() {
            for t in 0..trials_per_pose {
                let mut sc = scene.clone();
                sc.seed = derive_seed(scene.seed, &[si as u64, pi as u64, t as u64]);
                let run = |sc: &SceneConfig| match phase {
                    LiftPhase::BeforeLift => sim.simulate_grasp(pose, sc),
                    LiftPhase::AfterLift => sim.simulate_lifted(pose, sc),
                };
                let sample = match run(&sc) {
                    Err(SimError::PlacementFailure { .. }) => {
                        failures += 1;
                        sc.pile_size = 0;
                        run(&sc)?
                    }
                    other => other?,
                };
                samples.push(sample);
            }
        }
    }
    let meta = DatasetMeta {
        version: DATASET_VERSION,
        object: first.object,
        domain: first.domain,
        phase,
        scales: sim.scales,
        normalization: Normalization::from_limits(&sim.geometry.limits),
        splits: Splits::shuffled(samples.len(), first.domain, split_seed),
        class_histogram: class_histogram(&samples),
        placement_failures: failures,
        sample_count: samples.len(),
    };
    Ok(Dataset { samples, meta })
}

/// Path of the metadata file stored next to a samples file.
pub fn sidecar_path(samples: &Path) -> PathBuf {
    let mut name = samples.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

impl Dataset {
    pub fn split(&self, indices: &[usize]) -> Vec<&GraspSample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }

    /// Writes one JSON sample per line plus the metadata sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path)?);
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let samples = read_samples(path)?;
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        if meta.version != DATASET_VERSION {
            return Err(SimError::Data {
                line: 0,
                message: format!("unsupported dataset version {}", meta.version),
            });
        }
        if meta.sample_count != samples.len() {
            return Err(SimError::Data {
                line: 0,
                message: format!(
                    "metadata lists {} samples, file has {}",
                    meta.sample_count,
                    samples.len()
                ),
            });
        }
        Ok(Self { samples, meta })
    }
}

/// Reads and validates a JSONL samples file. Line numbers in errors are 1-based.
pub fn read_samples(path: &Path) -> Result<Vec<GraspSample>> {
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let data_err = |message: String| SimError::Data { line: i + 1, message };
        let s: GraspSample = serde_json::from_str(&line).map_err(|e| data_err(e.to_string()))?;
        s.validate().map_err(data_err)?;
        samples.push(s);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::pregrasp_grid;

    fn scenes() -> Vec<SceneConfig> {
        [0, 3, 6]
            .iter()
            .map(|&n| SceneConfig {
                object: ObjectSpec::ping_pong_ball(),
                pile_size: n,
                noise: 0.01,
                seed: 100 + n as u64,
                domain: Domain::SimLike,
            })
            .collect()
    }

    fn small() -> Dataset {
        let sim = Simulator::default();
        let poses: Vec<_> = pregrasp_grid(1.0 / 3.0).into_iter().step_by(997).collect();
        generate_dataset(&sim, &scenes(), &poses, 2, LiftPhase::BeforeLift, 9).unwrap()
    }

    #[test]
    fn generation_is_reproducible() {
        let a = small();
        let b = small();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 3 * 25 * 2);
        assert_eq!(a.meta.class_histogram.iter().sum::<usize>(), a.samples.len());
    }

    #[test]
    fn splits_partition_the_samples() {
        let s = Splits::shuffled(101, Domain::SimLike, 1);
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(s.train.len(), 61);
        let r = Splits::shuffled(100, Domain::RealLike, 1);
        assert_eq!((r.train.len(), r.val.len(), r.test.len()), (40, 10, 50));
    }

    #[test]
    fn save_load_round_trip() {
        let d = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grasps.jsonl");
        d.save(&path).unwrap();
        assert!(sidecar_path(&path).exists());
        assert_eq!(Dataset::load(&path).unwrap(), d);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let d = small();
        let good = serde_json::to_string(&d.samples[0]).unwrap();
        let mut short = d.samples[0].clone();
        short.tactile.pop();
        let bad = serde_json::to_string(&short).unwrap();
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        match read_samples(&path) {
            Err(SimError::Data { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn classes_saturate_at_four() {
        assert_eq!(count_class(0), 0);
        assert_eq!(count_class(4), 4);
        assert_eq!(count_class(11), 4);
    }
}
