use std::fmt;

use serde::{Deserialize, Serialize};

use crate::nn::{LayerSpec, NeuralModel};
use crate::simulator::NUM_CLASSES;

use super::features::{ENCODED_DIM, NAIVE_DIM};
use super::{EstimatorError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Probabilities over the five count classes.
    Softmax5,
    /// A single linear unit estimating the count directly.
    Regression1,
}

/// `[dense 256, relu, dropout, dense 128, relu, dropout, dense 64, relu, head]`
pub fn build_classifier(input_dim: usize, head: Head, seed: u64) -> Result<NeuralModel> {
    if input_dim != NAIVE_DIM && input_dim != ENCODED_DIM {
        return Err(EstimatorError::InvalidDim(input_dim));
    }
    use LayerSpec::*;
    let mut layers = vec![
        Dense { units: 256 },
        Relu,
        Dropout { rate: 0.5 },
        Dense { units: 128 },
        Relu,
        Dropout { rate: 0.5 },
        Dense { units: 64 },
        Relu,
    ];
    match head {
        Head::Softmax5 => layers.extend([Dense { units: NUM_CLASSES }, Softmax]),
        Head::Regression1 => layers.push(Dense { units: 1 }),
    }
    Ok(NeuralModel::new(vec![input_dim], layers, seed)?)
}

/// Probabilities over the count classes 0, 1, 2, 3 and 4-or-more.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution(pub [f64; NUM_CLASSES]);

impl ClassDistribution {
    pub fn one_hot(class: usize) -> Self {
        let mut p = [0.0; NUM_CLASSES];
        p[class.min(NUM_CLASSES - 1)] = 1.0;
        Self(p)
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let p: [f64; NUM_CLASSES] = values
            .try_into()
            .map_err(|_| EstimatorError::InvalidDim(values.len()))?;
        Ok(Self(p))
    }

    /// Most probable class; ties go to the smaller count.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|p| (0.0..=1.0).contains(p)) && (self.0.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }

    /// Elementwise mean.
    pub fn mean(parts: &[ClassDistribution]) -> Self {
        let n = parts.len() as f64;
        Self(std::array::from_fn(|k| parts.iter().map(|p| p.0[k]).sum::<f64>() / n))
    }
}

impl fmt::Display for ClassDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|p| format!("{p:.3}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Splits a scalar count estimate between its two neighbouring classes so
/// the expected class equals the (clamped) estimate.
pub fn regression_to_distribution(r: f64) -> Result<ClassDistribution> {
    if !r.is_finite() {
        return Err(EstimatorError::NonFinite(r));
    }
    let r = r.clamp(0.0, (NUM_CLASSES - 1) as f64);
    let lo = r.floor();
    let frac = r - lo;
    let mut p = [0.0; NUM_CLASSES];
    p[lo as usize] = 1.0 - frac;
    if frac > 0.0 {
        p[lo as usize + 1] = frac;
    }
    Ok(ClassDistribution(p))
}

/// Mean of the three member distributions and its argmax.
pub fn combine(
    naive: &ClassDistribution,
    encoder: &ClassDistribution,
    regression: &ClassDistribution,
) -> (ClassDistribution, usize) {
    let p = ClassDistribution::mean(&[*naive, *encoder, *regression]);
    let class = p.argmax();
    (p, class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn invalid_input_dim() {
        assert!(matches!(
            build_classifier(50, Head::Softmax5, 0),
            Err(EstimatorError::InvalidDim(50))
        ));
    }

    #[test]
    fn naive_softmax_outputs_probabilities() {
        let m = build_classifier(106, Head::Softmax5, 1).unwrap();
        let x = Tensor {
            shape: vec![3, 106],
            data: (0..318).map(|i| (i as f64 * 0.37).sin()).collect(),
        };
        let y = m.forward(&x).unwrap();
        assert_eq!(y.shape, vec![3, 5]);
        for i in 0..3 {
            let p = ClassDistribution::from_slice(y.row(i)).unwrap();
            assert!(p.is_valid());
        }
    }

    #[test]
    fn regression_head_is_scalar() {
        let m = build_classifier(34, Head::Regression1, 2).unwrap();
        let y = m.forward(&Tensor::zeros(&[1, 34])).unwrap();
        assert_eq!(y.shape, vec![1, 1]);
        assert!(y.data[0].is_finite());
    }

    #[test]
    fn parameter_count_closed_form() {
        for (dim, head, out) in [(106, Head::Softmax5, 5), (34, Head::Regression1, 1)] {
            let widths = [dim, 256, 128, 64, out];
            let expected: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
            assert_eq!(build_classifier(dim, head, 0).unwrap().param_count(), expected);
        }
    }

    #[test]
    fn regression_conversion() {
        assert_eq!(regression_to_distribution(2.0).unwrap(), ClassDistribution::one_hot(2));
        assert_eq!(regression_to_distribution(2.5).unwrap().0, [0.0, 0.0, 0.5, 0.5, 0.0]);
        assert_eq!(regression_to_distribution(-1.3).unwrap(), ClassDistribution::one_hot(0));
        assert_eq!(regression_to_distribution(9.0).unwrap(), ClassDistribution::one_hot(4));
        assert!(regression_to_distribution(f64::NAN).is_err());
    }

    #[test]
    fn ensemble_arithmetic_and_tie_break() {
        let one = ClassDistribution::one_hot(1);
        assert_eq!(combine(&one, &one, &one), (one, 1));
        let (p, c) = combine(
            &ClassDistribution::one_hot(0),
            &ClassDistribution::one_hot(1),
            &regression_to_distribution(2.0).unwrap(),
        );
        let third = 1.0 / 3.0;
        assert_eq!(p.0, [third, third, third, 0.0, 0.0]);
        assert_eq!(c, 0);
    }
}
