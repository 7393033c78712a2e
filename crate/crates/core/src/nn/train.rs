use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Loss, NeuralModel};
use super::optim::adam_step;
use super::{NnError, Result, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: Loss,
    pub seed: u64,
    /// Resample every epoch so each class appears equally often.
    pub oversample: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 3000,
            batch_size: 500,
            loss: Loss::Mse,
            seed: 0,
            oversample: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Inputs and targets with one batch item per sample. `classes` is needed
/// only for oversampling.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub classes: Option<Vec<usize>>,
}

impl TrainSet {
    pub fn new(inputs: Tensor, targets: Tensor) -> Self {
        Self {
            inputs,
            targets,
            classes: None,
        }
    }

    pub fn with_classes(mut self, classes: Vec<usize>) -> Self {
        self.classes = Some(classes);
        self
    }

    pub fn len(&self) -> usize {
        self.inputs.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `n` sample indices where every class present in `classes` gets an equal
/// share (the remainder goes to the lowest classes). Within a class, samples
/// are dealt out from repeated shuffles, so no sample repeats before every
/// sample of its class has been used.
pub fn balanced_indices(classes: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &c) in classes.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let k = by_class.len();
    if k == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n);
    for (rank, members) in by_class.values().enumerate() {
        let quota = n / k + usize::from(rank < n % k);
        let mut pool = Vec::new();
        while pool.len() < quota {
            let mut round = members.clone();
            round.shuffle(rng);
            pool.extend(round);
        }
        out.extend_from_slice(&pool[..quota]);
    }
    out
}

/// Mini-batch Adam training. Returns the mean training loss of each epoch.
pub fn train(model: &mut NeuralModel, set: &TrainSet, config: &TrainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if set.targets.batch() != set.len() {
        return Err(NnError::ShapeMismatch {
            context: "targets per input",
            expected: vec![set.len()],
            got: vec![set.targets.batch()],
        });
    }
    let classes = match (&set.classes, config.oversample) {
        (Some(c), true) if c.len() == set.len() => Some(c.as_slice()),
        (_, true) => {
            return Err(NnError::InvalidConfig(
                "oversampling needs one class label per sample".into(),
            ))
        }
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut order = match classes {
            Some(c) => balanced_indices(c, set.len(), &mut rng),
            None => (0..set.len()).collect(),
        };
        order.shuffle(&mut rng);

        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = set.inputs.select(batch);
            let y = set.targets.select(batch);
            let tape = model.forward_tape(&x, Some(&mut rng))?;
            let (loss, grads) = model.backward(&tape, &y, config.loss)?;
            adam_step(model, &grads, config.learning_rate)?;
            total += loss * batch.len() as f64;
        }
        history.push(total / order.len() as f64);
    }
    Ok(history)
}

/// Mean loss over `set` in inference mode.
pub fn evaluate_loss(model: &NeuralModel, set: &TrainSet, loss: Loss) -> Result<f64> {
    if set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let out = model.forward(&set.inputs)?;
    Ok(loss.value(&out, &set.targets))
}
