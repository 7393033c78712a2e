use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Aux, LayerSpec};
use super::optim::AdamState;
use super::{NnError, Result, Tensor};

pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean of squared errors over every output element.
    Mse,
    /// Mean over the batch of `-sum(target * ln(prediction))`.
    CategoricalCrossEntropy,
}

impl Loss {
    pub fn value(&self, prediction: &Tensor, target: &Tensor) -> f64 {
        match self {
            Loss::Mse => {
                let sq: f64 = prediction
                    .data
                    .iter()
                    .zip(&target.data)
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum();
                sq / prediction.len() as f64
            }
            Loss::CategoricalCrossEntropy => {
                let ce: f64 = prediction
                    .data
                    .iter()
                    .zip(&target.data)
                    .filter(|(_, t)| **t != 0.0)
                    .map(|(p, t)| -t * p.max(f64::MIN_POSITIVE).ln())
                    .sum();
                ce / prediction.batch() as f64
            }
        }
    }

    fn gradient(&self, prediction: &Tensor, target: &Tensor) -> Tensor {
        let data = match self {
            Loss::Mse => {
                let scale = 2.0 / prediction.len() as f64;
                prediction
                    .data
                    .iter()
                    .zip(&target.data)
                    .map(|(p, t)| scale * (p - t))
                    .collect()
            }
            Loss::CategoricalCrossEntropy => {
                let n = prediction.batch() as f64;
                prediction
                    .data
                    .iter()
                    .zip(&target.data)
                    .map(|(p, t)| -t / (p.max(f64::MIN_POSITIVE) * n))
                    .collect()
            }
        };
        Tensor {
            shape: prediction.shape.clone(),
            data,
        }
    }
}

/// Activations recorded by a forward pass, consumed by [`NeuralModel::backward`].
pub struct Tape {
    inputs: Vec<Tensor>,
    aux: Vec<Aux>,
    pub output: Tensor,
}

/// Per-layer parameter gradients, shaped like [`NeuralModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<Tensor>>);

impl Gradients {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().flatten().flat_map(|t| t.data.iter().copied())
    }
}

/// A sequential network: layer specs, their parameters and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    pub params: Vec<Vec<Tensor>>,
    pub(crate) adam: AdamState,
}

#[derive(Serialize, Deserialize)]
struct WeightFile {
    version: u32,
    input_shape: Vec<usize>,
    layer_specs: Vec<LayerSpec>,
    parameters: Vec<Vec<Vec<f64>>>,
}

impl NeuralModel {
    /// Validates the layer chain and draws initial weights from `seed`.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape.clone();
        let mut params = Vec::with_capacity(layers.len());
        for layer in &layers {
            let next = layer.output_shape(&shape)?;
            params.push(layer.init_params(&shape, &mut rng));
            shape = next;
        }
        Ok(Self {
            input_shape,
            layers,
            params,
            adam: AdamState::default(),
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Per-sample shape after each layer (first entry is the input shape).
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer
                .output_shape(out.last().expect("non-empty"))
                .expect("validated at construction");
            out.push(next);
        }
        out
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.shapes().pop().expect("non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    /// Same architecture (input shape and layer specs).
    pub fn same_architecture(&self, other: &NeuralModel) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }

    /// Model restricted to layers `range`, sharing parameter values.
    pub fn slice(&self, range: std::ops::Range<usize>) -> NeuralModel {
        let input_shape = self.shapes()[range.start].clone();
        NeuralModel {
            input_shape,
            layers: self.layers[range.clone()].to_vec(),
            params: self.params[range].to_vec(),
            adam: AdamState::default(),
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape.len() != self.input_shape.len() + 1 || input.shape[1..] != self.input_shape[..] {
            let mut expected = vec![input.batch()];
            expected.extend_from_slice(&self.input_shape);
            return Err(NnError::ShapeMismatch {
                context: "model input",
                expected,
                got: input.shape.clone(),
            });
        }
        Ok(())
    }

    /// Inference: dropout disabled.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_tape(input, None)?.output)
    }

    /// Forward pass that records activations. Passing an RNG enables
    /// training-mode dropout, with masks drawn from that generator.
    pub fn forward_tape(&self, input: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tape> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (layer, params) in self.layers.iter().zip(&self.params) {
            let (y, a) = layer.forward(params, &x, rng.as_deref_mut())?;
            inputs.push(x);
            aux.push(a);
            x = y;
        }
        Ok(Tape {
            inputs,
            aux,
            output: x,
        })
    }

    /// Loss of the recorded output and gradients of that loss with respect
    /// to every parameter.
    pub fn backward(&self, tape: &Tape, target: &Tensor, loss: Loss) -> Result<(f64, Gradients)> {
        if target.shape != tape.output.shape {
            return Err(NnError::ShapeMismatch {
                context: "loss target",
                expected: tape.output.shape.clone(),
                got: target.shape.clone(),
            });
        }
        let value = loss.value(&tape.output, target);

        let mut grads: Vec<Vec<Tensor>> = vec![Vec::new(); self.layers.len()];
        let mut layer_count = self.layers.len();
        // softmax followed by cross-entropy: the logit gradient is (p - t) / n
        let mut g = if loss == Loss::CategoricalCrossEntropy
            && matches!(self.layers.last(), Some(LayerSpec::Softmax))
        {
            layer_count -= 1;
            let n = tape.output.batch() as f64;
            Tensor {
                shape: tape.output.shape.clone(),
                data: tape
                    .output
                    .data
                    .iter()
                    .zip(&target.data)
                    .map(|(p, t)| (p - t) / n)
                    .collect(),
            }
        } else {
            loss.gradient(&tape.output, target)
        };

        for i in (0..layer_count).rev() {
            let (dx, dp) = self.layers[i].backward(&self.params[i], &tape.inputs[i], &tape.aux[i], &g)?;
            grads[i] = dp;
            g = dx;
        }
        Ok((value, Gradients(grads)))
    }

    /// Serializes architecture and parameters; optimizer state is not saved.
    pub fn to_json(&self) -> String {
        let file = WeightFile {
            version: WEIGHTS_VERSION,
            input_shape: self.input_shape.clone(),
            layer_specs: self.layers.clone(),
            parameters: self
                .params
                .iter()
                .map(|ps| ps.iter().map(|t| t.data.clone()).collect())
                .collect(),
        };
        serde_json::to_string(&file).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightFile = serde_json::from_str(text)?;
        if file.version != WEIGHTS_VERSION {
            return Err(NnError::Version(file.version));
        }
        let mut model = NeuralModel::new(file.input_shape, file.layer_specs, 0)?;
        if file.parameters.len() != model.params.len() {
            return Err(NnError::ShapeMismatch {
                context: "weight file layer count",
                expected: vec![model.params.len()],
                got: vec![file.parameters.len()],
            });
        }
        for (slot, values) in model.params.iter_mut().zip(file.parameters) {
            if slot.len() != values.len() {
                return Err(NnError::ShapeMismatch {
                    context: "weight file tensors per layer",
                    expected: vec![slot.len()],
                    got: vec![values.len()],
                });
            }
            for (t, data) in slot.iter_mut().zip(values) {
                if t.len() != data.len() {
                    return Err(NnError::ShapeMismatch {
                        context: "weight file tensor",
                        expected: t.shape.clone(),
                        got: vec![data.len()],
                    });
                }
                t.data = data;
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Parameters only, compared bit for bit.
    pub fn same_weights(&self, other: &NeuralModel) -> bool {
        self.same_architecture(other)
            && self
                .params
                .iter()
                .flatten()
                .zip(other.params.iter().flatten())
                .all(|(a, b)| {
                    a.data.len() == b.data.len()
                        && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }

    /// Resets Adam moments and step counter.
    pub fn reset_optimizer(&mut self) {
        self.adam = AdamState::default();
    }

    pub fn optimizer_step(&self) -> u64 {
        self.adam.step
    }
}
