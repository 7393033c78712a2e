use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use graspcount::estimators::{
    fine_tune, load_bundle, save_bundle, train_autoencoders, train_classifiers, Autoencoders, BundleMeta,
    EstimatorError,
};
use graspcount::force::{ForceError, LinearCountModel};
use graspcount::geometry::{grasp_volume, upper_bound_count, GeometryError, ObjectKind, ObjectSpec};
use graspcount::kinematics::{HandGeometry, HandPose, KinematicsError};
use graspcount::nn::NnError;
use graspcount::pipeline::{
    evaluate_estimator, fit_force_model, generate, write_report, Estimator, PipelineConfig, PipelineError,
};
use graspcount::simulator::{dedupe_symmetric, pregrasp_grid, Dataset, Domain, GraspSample, SimError, Simulator};

#[derive(Parser)]
#[command(name = "graspcount", version, about = "Estimate how many objects a robot hand holds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    object: Option<ObjectKind>,
    #[arg(long)]
    domain: Option<Domain>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hand geometry (TOML); defaults to the built-in hand.
    #[arg(long)]
    geometry: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorKind {
    Ensemble,
    Volume,
    Force,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate grasps and write a JSONL dataset with a metadata sidecar.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        poses: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated pile sizes, one scene each.
        #[arg(long, value_delimiter = ',')]
        piles: Option<Vec<u32>>,
        #[arg(long)]
        noise: Option<f64>,
        /// before_lift or after_lift
        #[arg(long)]
        phase: Option<graspcount::force::LiftPhase>,
    },
    /// Report the pre-grasp grid size before and after symmetry removal.
    DedupePoses {
        #[command(flatten)]
        common: Common,
    },
    /// Train the tactile autoencoders on a dataset's training split.
    TrainAutoencoders {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the three classifiers and write a model bundle.
    TrainClassifiers {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Directory holding trained autoencoders.
        #[arg(long)]
        autoencoders: PathBuf,
    },
    /// Continue training a bundle on another dataset.
    FineTune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate an estimator on one split of a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        estimator: EstimatorKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        force_model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Print the ensemble distribution and class for every sample.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Grasp volume and packing upper bound for one pose.
    VolumeBound {
        #[command(flatten)]
        common: Common,
        /// spread, three proximal and three distal angles
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        pose: Vec<f64>,
        /// Angles are given in degrees.
        #[arg(long)]
        degrees: bool,
    },
    /// Fit the linear force-to-count model on a dataset's training split.
    ForceFit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

const VALIDATION: u8 = 2;
const DATA: u8 = 3;

fn classify(e: &PipelineError) -> u8 {
    use PipelineError as P;
    match e {
        P::LengthMismatch { .. } | P::Config(_) | P::Kinematics(_) => VALIDATION,
        P::Geometry(GeometryError::InvalidObject(_) | GeometryError::Kinematics(_)) => VALIDATION,
        P::Sim(SimError::InvalidScene(_) | SimError::InvalidMapping(_) | SimError::Kinematics(_)) => VALIDATION,
        P::Estimator(EstimatorError::InvalidDim(_) | EstimatorError::ShapeMismatch(_)) => VALIDATION,
        P::Estimator(EstimatorError::Nn(NnError::InvalidConfig(_))) | P::Nn(NnError::InvalidConfig(_)) => VALIDATION,
        P::Force(ForceError::Kinematics(_)) => VALIDATION,
        _ => DATA,
    }
}

impl<E: Into<PipelineError>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        Failure {
            code: classify(&e),
            message: e.to_string(),
        }
    }
}

fn validation(message: impl Into<String>) -> Failure {
    Failure {
        code: VALIDATION,
        message: message.into(),
    }
}

type CliResult = std::result::Result<(), Failure>;

impl Common {
    fn pipeline(&self) -> Result<PipelineConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = self.object {
            cfg.data.object = o;
        }
        if let Some(d) = self.domain {
            cfg.data.domain = d;
        }
        if let Some(e) = self.epochs {
            cfg.autoencoder.epochs = e;
            cfg.classifier.epochs = e;
        }
        Ok(cfg)
    }

    fn simulator(&self) -> Result<Simulator, Failure> {
        let geometry = match &self.geometry {
            Some(p) => HandGeometry::load(p)?,
            None => HandGeometry::default(),
        };
        Ok(Simulator::new(geometry))
    }

    fn out(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn load_split(path: &Path, split: Split) -> Result<(Dataset, Vec<usize>), Failure> {
    let ds = Dataset::load(path).map_err(PipelineError::from)?;
    let s = &ds.meta.splits;
    let idx = match split {
        Split::Train => s.train.clone(),
        Split::Val => s.val.clone(),
        Split::Test => s.test.clone(),
        Split::All => (0..ds.samples.len()).collect(),
    };
    Ok((ds, idx))
}

fn gen_data(
    common: &Common,
    poses: Option<usize>,
    trials: Option<usize>,
    piles: Option<Vec<u32>>,
    noise: Option<f64>,
    phase: Option<graspcount::force::LiftPhase>,
) -> CliResult {
    let mut cfg = common.pipeline()?;
    let d = &mut cfg.data;
    d.poses = poses.unwrap_or(d.poses);
    d.trials_per_pose = trials.unwrap_or(d.trials_per_pose);
    d.pile_sizes = piles.unwrap_or(d.pile_sizes.clone());
    d.noise = noise.unwrap_or(d.noise);
    d.phase = phase.unwrap_or(d.phase);
    let ds = generate(&common.simulator()?, &cfg.data, cfg.seed)?;
    let out = common.out("dataset.jsonl");
    ds.save(&out).map_err(PipelineError::from)?;
    println!(
        "wrote {} samples to {} (class histogram {:?}, {} placement failures)",
        ds.samples.len(),
        out.display(),
        ds.meta.class_histogram,
        ds.meta.placement_failures
    );
    Ok(())
}

fn dedupe_poses(common: &Common) -> CliResult {
    let sim = common.simulator()?;
    let grid = pregrasp_grid(sim.geometry.distal_coupling_ratio);
    let unique = dedupe_symmetric(&grid);
    println!("raw grid: {} poses, after symmetry removal: {}", grid.len(), unique.len());
    if let Some(out) = &common.out {
        std::fs::write(out, serde_json::to_string(&unique).map_err(PipelineError::from)?)
            .map_err(PipelineError::from)?;
    }
    Ok(())
}

fn train_aes(common: &Common, data: &Path) -> CliResult {
    let cfg = common.pipeline()?;
    let (ds, idx) = load_split(data, Split::Train)?;
    let (ae_cfg, _) = cfg.seeded();
    let (aes, hist) = train_autoencoders(&ds.split(&idx), &ae_cfg)?;
    let out = common.out("autoencoders");
    aes.save(&out)?;
    for (name, h) in ["palm", "fixed", "moving"].iter().zip(&hist) {
        println!("{name}: final reconstruction loss {:.6}", h.last().copied().unwrap_or(f64::NAN));
    }
    println!("saved autoencoders to {}", out.display());
    Ok(())
}

fn train_cls(common: &Common, data: &Path, ae_dir: &Path) -> CliResult {
    let cfg = common.pipeline()?;
    let (ds, idx) = load_split(data, Split::Train)?;
    let aes = Autoencoders::load(ae_dir)?;
    let (ae_cfg, cls_cfg) = cfg.seeded();
    let (ens, hist) = train_classifiers(&ds.split(&idx), aes, ds.meta.normalization, &cls_cfg)?;
    let out = common.out("bundle");
    let meta = BundleMeta::new(ds.meta.object.kind, ds.meta.normalization, ae_cfg, cls_cfg);
    save_bundle(&out, &ens, &meta)?;
    for (name, h) in ["naive", "encoder", "regression"].iter().zip(&hist) {
        println!("{name}: final training loss {:.6}", h.last().copied().unwrap_or(f64::NAN));
    }
    println!("saved bundle to {}", out.display());
    Ok(())
}

fn fine_tune_cmd(common: &Common, bundle: &Path, data: &Path) -> CliResult {
    let cfg = common.pipeline()?;
    let (ens, meta) = load_bundle(bundle)?;
    let (ds, idx) = load_split(data, Split::Train)?;
    let (_, cls_cfg) = cfg.seeded();
    let epochs = common.epochs.unwrap_or(cls_cfg.epochs);
    let (tuned, _) = fine_tune(&ens, &ds.split(&idx), epochs, &cls_cfg)?;
    let out = common.out("bundle-tuned");
    let meta = BundleMeta::new(meta.object, meta.normalization, meta.autoencoder_training, cls_cfg);
    save_bundle(&out, &tuned, &meta)?;
    println!("fine-tuned for {epochs} epochs; saved bundle to {}", out.display());
    Ok(())
}

fn eval_cmd(
    common: &Common,
    kind: EstimatorKind,
    data: &Path,
    bundle: Option<&Path>,
    force_model: Option<&Path>,
    split: Split,
) -> CliResult {
    if matches!(kind, EstimatorKind::Ensemble) && bundle.is_none() {
        return Err(validation("--bundle is required for the ensemble"));
    }
    let sim = common.simulator()?;
    let (ds, idx) = load_split(data, split)?;
    let samples = ds.split(&idx);
    let bundle = match (kind, bundle) {
        (EstimatorKind::Ensemble, Some(b)) => Some(load_bundle(b)?.0),
        _ => None,
    };
    let force = match force_model {
        Some(p) => Some(LinearCountModel::load(p)?),
        None => None,
    };
    let est = match kind {
        EstimatorKind::Ensemble => Estimator::Ensemble(bundle.as_ref().expect("loaded above")),
        EstimatorKind::Volume => Estimator::Volume {
            geometry: &sim.geometry,
            object: ds.meta.object,
        },
        EstimatorKind::Force => Estimator::Force {
            model: force.as_ref(),
            geometry: &sim.geometry,
            scales: ds.meta.scales,
        },
    };
    let report = evaluate_estimator(&est, &samples)?;
    print!("{}", report.render_table());
    if let Some(out) = &common.out {
        write_report(out, &report)?;
    }
    Ok(())
}

fn predict_cmd(common: &Common, bundle: &Path, data: &Path) -> CliResult {
    let (ens, _) = load_bundle(bundle)?;
    let (ds, idx) = load_split(data, Split::All)?;
    let samples: Vec<&GraspSample> = ds.split(&idx);
    let preds = ens.predict(&samples)?;
    let mut lines = String::new();
    for (s, (p, c)) in samples.iter().zip(&preds) {
        let row = serde_json::json!({ "seed": s.meta.seed, "distribution": p.0, "class": c, "label": s.label });
        lines.push_str(&row.to_string());
        lines.push('\n');
    }
    match &common.out {
        Some(out) => std::fs::write(out, lines).map_err(PipelineError::from)?,
        // a closed pipe (e.g. `| head`) is not an error
        None => {
            let _ = std::io::Write::write_all(&mut std::io::stdout().lock(), lines.as_bytes());
        }
    }
    Ok(())
}

fn volume_bound(common: &Common, values: &[f64], degrees: bool) -> CliResult {
    let sim = common.simulator()?;
    let values: Vec<f64> = values
        .iter()
        .map(|v| if degrees { v.to_radians() } else { *v })
        .collect();
    let pose = HandPose::from_slice(&values).map_err(|e: KinematicsError| Failure::from(e))?;
    let object = ObjectSpec::default_for(common.object.unwrap_or(ObjectKind::Sphere));
    let volume = grasp_volume(&pose, &sim.geometry)?;
    let bound = upper_bound_count(volume, &object);
    println!("grasp volume: {:.3} cm^3", volume * 1e6);
    println!("upper bound ({}): {bound}", object.kind);
    Ok(())
}

fn force_fit(common: &Common, data: &Path) -> CliResult {
    let sim = common.simulator()?;
    let (ds, idx) = load_split(data, Split::Train)?;
    let model = fit_force_model(&ds.split(&idx), &sim.geometry, &ds.meta.scales, ds.meta.phase)?;
    let out = common.out("force_model.json");
    model.save(&out)?;
    println!(
        "count = {:.4} * force + {:.4} (fit on {:?}); saved to {}",
        model.slope,
        model.intercept,
        model.trained_on,
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenData {
            common,
            poses,
            trials,
            piles,
            noise,
            phase,
        } => gen_data(&common, poses, trials, piles, noise, phase),
        Command::DedupePoses { common } => dedupe_poses(&common),
        Command::TrainAutoencoders { common, data } => train_aes(&common, &data),
        Command::TrainClassifiers {
            common,
            data,
            autoencoders,
        } => train_cls(&common, &data, &autoencoders),
        Command::FineTune { common, bundle, data } => fine_tune_cmd(&common, &bundle, &data),
        Command::Eval {
            common,
            estimator,
            data,
            bundle,
            force_model,
            split,
        } => eval_cmd(&common, estimator, &data, bundle.as_deref(), force_model.as_deref(), split),
        Command::Predict { common, bundle, data } => predict_cmd(&common, &bundle, &data),
        Command::VolumeBound { common, pose, degrees } => volume_bound(&common, &pose, degrees),
        Command::ForceFit { common, data } => force_fit(&common, &data),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
