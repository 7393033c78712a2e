use super::model::{Gradients, NeuralModel};
use super::{NnError, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments, laid out like the model parameters. Empty until the first step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<Vec<f64>>>,
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut NeuralModel, grads: &Gradients, learning_rate: f64) -> Result<()> {
    if grads.0.len() != model.params.len()
        || grads
            .0
            .iter()
            .zip(&model.params)
            .any(|(g, p)| g.len() != p.len() || g.iter().zip(p).any(|(a, b)| a.len() != b.len()))
    {
        return Err(NnError::ShapeMismatch {
            context: "gradients vs parameters",
            expected: vec![model.param_count()],
            got: vec![grads.values().count()],
        });
    }
    if grads.values().any(|g| !g.is_finite()) {
        return Err(NnError::NonFiniteGradient);
    }

    let state = &mut model.adam;
    if state.m.is_empty() {
        let zeros: Vec<Vec<Vec<f64>>> = model
            .params
            .iter()
            .map(|ps| ps.iter().map(|t| vec![0.0; t.len()]).collect())
            .collect();
        state.m = zeros.clone();
        state.v = zeros;
    }
    state.step += 1;
    let t = state.step as f64;
    let bias1 = 1.0 - BETA1.powf(t);
    let bias2 = 1.0 - BETA2.powf(t);

    for (l, layer_grads) in grads.0.iter().enumerate() {
        for (k, g) in layer_grads.iter().enumerate() {
            let p = &mut model.params[l][k].data;
            let m = &mut state.m[l][k];
            let v = &mut state.v[l][k];
            for i in 0..p.len() {
                let gi = g.data[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
    if model.params.iter().flatten().flat_map(|t| &t.data).any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteParameter);
    }
    Ok(())
}
