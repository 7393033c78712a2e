use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::estimators::{save_bundle, train_autoencoders, train_classifiers, BundleMeta, Ensemble};
use crate::force::{LiftPhase, LinearCountModel};
use crate::geometry::{ObjectKind, ObjectSpec};
use crate::kinematics::HandPose;
use crate::nn::TrainConfig;
use crate::simulator::{
    dedupe_symmetric, derive_seed, generate_dataset, pregrasp_grid, Dataset, Domain, GraspSample, SceneConfig,
    Simulator,
};

use super::evaluate::{evaluate_estimator, fit_force_model, Estimator};
use super::metrics::EvalReport;
use super::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub object: ObjectKind,
    pub domain: Domain,
    /// One scene per entry.
    pub pile_sizes: Vec<u32>,
    pub noise: f64,
    /// Pre-grasps drawn from the deduplicated grid.
    pub poses: usize,
    pub trials_per_pose: usize,
    pub phase: LiftPhase,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            object: ObjectKind::Sphere,
            domain: Domain::SimLike,
            pile_sizes: vec![2, 4, 6, 8, 10],
            noise: 0.01,
            poses: 115,
            trials_per_pose: 10,
            phase: LiftPhase::BeforeLift,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pile_sizes.is_empty() || self.poses == 0 || self.trials_per_pose == 0 {
            return Err(PipelineError::Config(
                "pile_sizes, poses and trials_per_pose must be non-empty".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(PipelineError::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }

    pub fn scenes(&self, seed: u64) -> Vec<SceneConfig> {
        self.pile_sizes
            .iter()
            .enumerate()
            .map(|(k, &pile_size)| SceneConfig {
                object: ObjectSpec::default_for(self.object),
                pile_size,
                noise: self.noise,
                seed: derive_seed(seed, &[k as u64]),
                domain: self.domain,
            })
            .collect()
    }
}

/// `n` distinct pre-grasps from the deduplicated grid, in grid order.
pub fn sample_poses(coupling_ratio: f64, n: usize, seed: u64) -> Vec<HandPose> {
    let grid = dedupe_symmetric(&pregrasp_grid(coupling_ratio));
    let n = n.min(grid.len());
    let mut idx = rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), grid.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| grid[i]).collect()
}

pub fn generate(sim: &Simulator, config: &DataConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let poses = sample_poses(sim.geometry.distal_coupling_ratio, config.poses, seed);
    Ok(generate_dataset(
        sim,
        &config.scenes(seed),
        &poses,
        config.trials_per_pose,
        config.phase,
        derive_seed(seed, &[u64::MAX]),
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub autoencoder: TrainConfig,
    pub classifier: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            autoencoder: TrainConfig::default(),
            classifier: TrainConfig {
                oversample: true,
                ..TrainConfig::default()
            },
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Training configurations with seeds derived from the pipeline seed.
    pub fn seeded(&self) -> (TrainConfig, TrainConfig) {
        let ae = TrainConfig {
            seed: derive_seed(self.seed, &[1]),
            ..self.autoencoder.clone()
        };
        let cls = TrainConfig {
            seed: derive_seed(self.seed, &[2]),
            ..self.classifier.clone()
        };
        (ae, cls)
    }
}

pub struct PipelineRun {
    pub dataset: Dataset,
    pub ensemble: Ensemble,
    pub force_model: LinearCountModel,
    /// Ensemble, volume and force reports on the test split.
    pub reports: Vec<EvalReport>,
    pub dataset_path: PathBuf,
    pub bundle_dir: PathBuf,
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{}.json", report.estimator)), report.to_json())?;
    std::fs::write(dir.join(format!("{}.txt", report.estimator)), report.render_table())?;
    Ok(())
}

/// Generate data, train autoencoders and classifiers on the training split,
/// fit the force baseline, and evaluate all three estimators on the test
/// split. Artifacts go under `out`.
pub fn run_pipeline(sim: &Simulator, config: &PipelineConfig, out: &Path) -> Result<PipelineRun> {
    std::fs::create_dir_all(out)?;
    let dataset = generate(sim, &config.data, config.seed)?;
    let dataset_path = out.join("dataset.jsonl");
    dataset.save(&dataset_path)?;

    let train: Vec<&GraspSample> = dataset.split(&dataset.meta.splits.train);
    let test: Vec<&GraspSample> = dataset.split(&dataset.meta.splits.test);
    let (ae_cfg, cls_cfg) = config.seeded();
    let (aes, _) = train_autoencoders(&train, &ae_cfg)?;
    let (ensemble, _) = train_classifiers(&train, aes, dataset.meta.normalization, &cls_cfg)?;
    let bundle_dir = out.join("bundle");
    let meta = BundleMeta::new(
        config.data.object,
        dataset.meta.normalization,
        ae_cfg,
        cls_cfg,
    );
    save_bundle(&bundle_dir, &ensemble, &meta)?;

    let force_model = fit_force_model(&train, &sim.geometry, &sim.scales, dataset.meta.phase)?;
    force_model.save(out.join("force_model.json"))?;

    let estimators = [
        Estimator::Ensemble(&ensemble),
        Estimator::Volume {
            geometry: &sim.geometry,
            object: dataset.meta.object,
        },
        Estimator::Force {
            model: Some(&force_model),
            geometry: &sim.geometry,
            scales: sim.scales,
        },
    ];
    let mut reports = Vec::new();
    for est in &estimators {
        let r = evaluate_estimator(est, &test)?;
        write_report(&out.join("reports"), &r)?;
        reports.push(r);
    }
    Ok(PipelineRun {
        dataset,
        ensemble,
        force_model,
        reports,
        dataset_path,
        bundle_dir,
    })
}
