use crate::nn::{train, Loss, NeuralModel, Tensor, TrainConfig, TrainSet};
use crate::simulator::{count_class, GraspSample, Normalization, NUM_CLASSES};

use super::autoencoder::Autoencoders;
use super::classifier::{build_classifier, combine, regression_to_distribution, ClassDistribution, Head};
use super::features::{encoded_matrix, naive_matrix, ENCODED_DIM, NAIVE_DIM};
use super::{EstimatorError, Result};

/// The three count estimators sharing one set of tactile autoencoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub autoencoders: Autoencoders,
    pub naive: NeuralModel,
    pub encoder: NeuralModel,
    pub regression: NeuralModel,
    pub normalization: Normalization,
}

/// Per-member outputs for a batch of samples.
#[derive(Debug, Clone)]
pub struct MemberOutputs {
    pub naive: Vec<ClassDistribution>,
    pub encoder: Vec<ClassDistribution>,
    pub regression: Vec<ClassDistribution>,
    pub regression_raw: Vec<f64>,
}

fn distributions(out: &Tensor) -> Result<Vec<ClassDistribution>> {
    (0..out.batch()).map(|i| ClassDistribution::from_slice(out.row(i))).collect()
}

fn one_hot_targets(classes: &[usize]) -> Tensor {
    let mut data = vec![0.0; classes.len() * NUM_CLASSES];
    for (i, &c) in classes.iter().enumerate() {
        data[i * NUM_CLASSES + c] = 1.0;
    }
    Tensor {
        shape: vec![classes.len(), NUM_CLASSES],
        data,
    }
}

impl Ensemble {
    /// Untrained members around existing autoencoders.
    pub fn new(autoencoders: Autoencoders, normalization: Normalization, seed: u64) -> Self {
        Self {
            autoencoders,
            naive: build_classifier(NAIVE_DIM, Head::Softmax5, seed).expect("valid dim"),
            encoder: build_classifier(ENCODED_DIM, Head::Softmax5, seed.wrapping_add(1)).expect("valid dim"),
            regression: build_classifier(ENCODED_DIM, Head::Regression1, seed.wrapping_add(2))
                .expect("valid dim"),
            normalization,
        }
    }

    pub(crate) fn check_architecture(&self) -> Result<()> {
        for (model, dim, out) in [
            (&self.naive, NAIVE_DIM, NUM_CLASSES),
            (&self.encoder, ENCODED_DIM, NUM_CLASSES),
            (&self.regression, ENCODED_DIM, 1),
        ] {
            if model.input_shape() != [dim] || model.output_shape() != [out] {
                return Err(EstimatorError::ShapeMismatch(format!(
                    "expected a {dim} -> {out} model, got {:?} -> {:?}",
                    model.input_shape(),
                    model.output_shape()
                )));
            }
        }
        Ok(())
    }

    pub fn members(&self, samples: &[&GraspSample]) -> Result<MemberOutputs> {
        self.check_architecture()?;
        let naive = self.naive.forward(&naive_matrix(samples, &self.normalization)?)?;
        let encoded = encoded_matrix(samples, &self.autoencoders, &self.normalization)?;
        let enc = self.encoder.forward(&encoded)?;
        let reg = self.regression.forward(&encoded)?;
        Ok(MemberOutputs {
            naive: distributions(&naive)?,
            encoder: distributions(&enc)?,
            regression: reg
                .data
                .iter()
                .map(|&r| regression_to_distribution(r))
                .collect::<Result<_>>()?,
            regression_raw: reg.data,
        })
    }

    /// Averaged distribution and predicted class for each sample.
    pub fn predict(&self, samples: &[&GraspSample]) -> Result<Vec<(ClassDistribution, usize)>> {
        let m = self.members(samples)?;
        Ok((0..samples.len())
            .map(|i| combine(&m.naive[i], &m.encoder[i], &m.regression[i]))
            .collect())
    }

    /// Mean negative log-probability the ensemble assigns to the true class.
    pub fn log_loss(&self, samples: &[&GraspSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(EstimatorError::EmptyDataset);
        }
        let preds = self.predict(samples)?;
        let total: f64 = preds
            .iter()
            .zip(samples)
            .map(|((p, _), s)| -p.0[count_class(s.label)].max(f64::MIN_POSITIVE).ln())
            .sum();
        Ok(total / samples.len() as f64)
    }
}

pub fn ensemble_predict(sample: &GraspSample, ensemble: &Ensemble) -> Result<(ClassDistribution, usize)> {
    Ok(ensemble.predict(&[sample])?.remove(0))
}

/// Trains the three members on `samples`, in parallel. Histories are in
/// naive, encoder, regression order.
fn fit_members(ens: &mut Ensemble, samples: &[&GraspSample], config: &TrainConfig) -> Result<[Vec<f64>; 3]> {
    if samples.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let classes: Vec<usize> = samples.iter().map(|s| count_class(s.label)).collect();
    let naive_x = naive_matrix(samples, &ens.normalization)?;
    let encoded_x = encoded_matrix(samples, &ens.autoencoders, &ens.normalization)?;
    let onehot = one_hot_targets(&classes);
    let scalar = Tensor {
        shape: vec![classes.len(), 1],
        data: classes.iter().map(|&c| c as f64).collect(),
    };
    let jobs = [
        (&mut ens.naive, naive_x, onehot.clone(), Loss::CategoricalCrossEntropy),
        (&mut ens.encoder, encoded_x.clone(), onehot, Loss::CategoricalCrossEntropy),
        (&mut ens.regression, encoded_x, scalar, Loss::Mse),
    ];
    let mut histories: [Vec<f64>; 3] = Default::default();
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = jobs
            .into_iter()
            .enumerate()
            .map(|(k, (model, x, y, loss))| {
                let set = TrainSet::new(x, y).with_classes(classes.clone());
                let cfg = TrainConfig {
                    loss,
                    seed: config.seed.wrapping_add(20 + k as u64),
                    ..config.clone()
                };
                scope.spawn(move || train(model, &set, &cfg))
            })
            .collect();
        for (h, out) in handles.into_iter().zip(histories.iter_mut()) {
            *out = h.join().expect("training thread panicked")?;
        }
        Ok(())
    })?;
    Ok(histories)
}

/// Builds and trains the three members on top of trained autoencoders.
pub fn train_classifiers(
    samples: &[&GraspSample],
    autoencoders: Autoencoders,
    normalization: Normalization,
    config: &TrainConfig,
) -> Result<(Ensemble, [Vec<f64>; 3])> {
    let mut ens = Ensemble::new(autoencoders, normalization, config.seed);
    let hist = fit_members(&mut ens, samples, config)?;
    Ok((ens, hist))
}

/// Continues training every member parameter from `pretrained` on new data
/// with fresh optimizer state. Autoencoders are kept as they are. Dropout
/// stays active, as in normal training.
pub fn fine_tune(
    pretrained: &Ensemble,
    samples: &[&GraspSample],
    epochs: usize,
    config: &TrainConfig,
) -> Result<(Ensemble, [Vec<f64>; 3])> {
    pretrained.check_architecture()?;
    if samples.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let mut ens = pretrained.clone();
    for m in [&mut ens.naive, &mut ens.encoder, &mut ens.regression] {
        m.reset_optimizer();
    }
    let cfg = TrainConfig {
        epochs,
        ..config.clone()
    };
    let hist = fit_members(&mut ens, samples, &cfg)?;
    Ok((ens, hist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ObjectKind;
    use crate::kinematics::JointLimits;
    use crate::simulator::{Domain, SampleMeta};

    fn samples(n: usize) -> Vec<GraspSample> {
        (0..n)
            .map(|i| GraspSample {
                pose: [0.3, 1.0, 1.1, 1.2, 0.3, 0.35, 0.4],
                tactile: (0..96).map(|k| ((i * 13 + k * 7) % 17) as f64 / 17.0).collect(),
                strain: [0.1 * (i % 3) as f64, 0.2, 0.0],
                label: (i % 6) as u32,
                meta: SampleMeta {
                    seed: i as u64,
                    domain: Domain::SimLike,
                    object: ObjectKind::Sphere,
                },
            })
            .collect()
    }

    fn ensemble() -> Ensemble {
        Ensemble::new(Autoencoders::new(0), Normalization::from_limits(&JointLimits::default()), 3)
    }

    #[test]
    fn prediction_is_the_member_mean() {
        let data = samples(20);
        let refs: Vec<&GraspSample> = data.iter().collect();
        let ens = ensemble();
        let m = ens.members(&refs).unwrap();
        for (i, (p, c)) in ens.predict(&refs).unwrap().iter().enumerate() {
            for k in 0..NUM_CLASSES {
                let mean = (m.naive[i].0[k] + m.encoder[i].0[k] + m.regression[i].0[k]) / 3.0;
                assert!((p.0[k] - mean).abs() <= 1e-12);
            }
            assert!(p.is_valid());
            assert_eq!(*c, p.argmax());
        }
    }

    #[test]
    fn zero_epoch_fine_tune_is_identity() {
        let data = samples(10);
        let refs: Vec<&GraspSample> = data.iter().collect();
        let ens = ensemble();
        let (tuned, hist) = fine_tune(&ens, &refs, 0, &TrainConfig::default()).unwrap();
        assert!(hist.iter().all(Vec::is_empty));
        assert!(tuned.naive.same_weights(&ens.naive));
        assert!(tuned.encoder.same_weights(&ens.encoder));
        assert!(tuned.regression.same_weights(&ens.regression));
    }

    #[test]
    fn fine_tune_rejects_empty_and_mismatched() {
        let ens = ensemble();
        assert!(matches!(
            fine_tune(&ens, &[], 1, &TrainConfig::default()),
            Err(EstimatorError::EmptyDataset)
        ));
        let mut bad = ens.clone();
        bad.regression = build_classifier(NAIVE_DIM, Head::Regression1, 0).unwrap();
        let data = samples(4);
        let refs: Vec<&GraspSample> = data.iter().collect();
        assert!(matches!(
            fine_tune(&bad, &refs, 1, &TrainConfig::default()),
            Err(EstimatorError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn fine_tuned_architecture_unchanged() {
        let data = samples(12);
        let refs: Vec<&GraspSample> = data.iter().collect();
        let ens = ensemble();
        let cfg = TrainConfig {
            batch_size: 4,
            oversample: true,
            ..TrainConfig::default()
        };
        let (tuned, _) = fine_tune(&ens, &refs, 2, &cfg).unwrap();
        assert!(tuned.naive.same_architecture(&ens.naive));
        assert!(!tuned.naive.same_weights(&ens.naive));
        assert!(tuned.autoencoders.palm.same_weights(&ens.autoencoders.palm));
    }
}
