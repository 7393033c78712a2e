use nalgebra::Rotation3;

use crate::estimators::Ensemble;
use crate::force::{fit_linear, predict_count, vertical_force, LiftPhase, LinearCountModel};
use crate::geometry::{grasp_volume_estimate, ObjectSpec};
use crate::kinematics::HandGeometry;
use crate::simulator::{count_class, GraspSample, SensorScales};

use super::metrics::EvalReport;
use super::{PipelineError, Result};

/// Net upward force in newtons implied by a palm-up sample's tactile readings.
pub fn grasp_force(sample: &GraspSample, geometry: &HandGeometry, scales: &SensorScales) -> Result<f64> {
    let f = vertical_force(&sample.tactile, &sample.hand_pose(), geometry, &Rotation3::identity())?;
    Ok(f * scales.tactile)
}

/// Least-squares count-from-force model over `samples`.
pub fn fit_force_model(
    samples: &[&GraspSample],
    geometry: &HandGeometry,
    scales: &SensorScales,
    phase: LiftPhase,
) -> Result<LinearCountModel> {
    let pairs = samples
        .iter()
        .map(|s| Ok((grasp_force(s, geometry, scales)?, s.label as f64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(fit_linear(&pairs, phase)?)
}

pub enum Estimator<'a> {
    /// Linear regression on the net tactile force; `None` if not fitted.
    Force {
        model: Option<&'a LinearCountModel>,
        geometry: &'a HandGeometry,
        scales: SensorScales,
    },
    /// Packing bound on the grasp hull volume.
    Volume {
        geometry: &'a HandGeometry,
        object: ObjectSpec,
    },
    Ensemble(&'a Ensemble),
}

impl Estimator<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Force { .. } => "force",
            Estimator::Volume { .. } => "volume",
            Estimator::Ensemble(_) => "ensemble",
        }
    }
}

pub fn evaluate_estimator(estimator: &Estimator, samples: &[&GraspSample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(PipelineError::EmptyInput);
    }
    let truths: Vec<usize> = samples.iter().map(|s| count_class(s.label)).collect();
    let mut violations = None;
    let predictions: Vec<usize> = match estimator {
        Estimator::Force {
            model,
            geometry,
            scales,
        } => {
            let model = model.ok_or(PipelineError::UntrainedModel("force"))?;
            samples
                .iter()
                .map(|s| Ok(count_class(predict_count(model, grasp_force(s, geometry, scales)?))))
                .collect::<Result<_>>()?
        }
        Estimator::Volume { geometry, object } => {
            let bounds = samples
                .iter()
                .map(|s| Ok(grasp_volume_estimate(&s.hand_pose(), geometry, object)?))
                .collect::<Result<Vec<u32>>>()?;
            let over = samples.iter().zip(&bounds).filter(|(s, b)| s.label > **b).count();
            violations = Some(over as f64 / samples.len() as f64);
            bounds.into_iter().map(count_class).collect()
        }
        Estimator::Ensemble(ens) => ens.predict(samples)?.into_iter().map(|(_, c)| c).collect(),
    };
    let mut report = EvalReport::from_predictions(estimator.name(), &predictions, &truths)?;
    report.upper_bound_violation_rate = violations;
    Ok(report)
}

/// The most frequent true class, which a constant predictor would output.
pub fn majority_class(samples: &[&GraspSample]) -> usize {
    let mut hist = [0usize; crate::simulator::NUM_CLASSES];
    for s in samples {
        hist[count_class(s.label)] += 1;
    }
    let mut best = 0;
    for (k, &n) in hist.iter().enumerate() {
        if n > hist[best] {
            best = k;
        }
    }
    best
}
