use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::simulator::NUM_CLASSES;

use super::{PipelineError, Result};

pub type Confusion = [[u64; NUM_CLASSES]; NUM_CLASSES];

/// Per-class RMSE; `None` for classes with no samples.
pub type PerClass = [Option<f64>; NUM_CLASSES];

fn check_lengths(predictions: &[usize], truths: &[usize]) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(PipelineError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    Ok(())
}

fn cap(c: usize) -> usize {
    c.min(NUM_CLASSES - 1)
}

/// Per-class and overall root-mean-square error over class indices.
pub fn rmse(predictions: &[usize], truths: &[usize]) -> Result<(PerClass, f64)> {
    check_lengths(predictions, truths)?;
    let mut sq = [0.0; NUM_CLASSES];
    let mut n = [0usize; NUM_CLASSES];
    for (&p, &t) in predictions.iter().zip(truths) {
        let (p, t) = (cap(p), cap(t));
        let d = p as f64 - t as f64;
        sq[t] += d * d;
        n[t] += 1;
    }
    let per_class = std::array::from_fn(|k| (n[k] > 0).then(|| (sq[k] / n[k] as f64).sqrt()));
    let total: usize = n.iter().sum();
    let overall = if total == 0 {
        0.0
    } else {
        (sq.iter().sum::<f64>() / total as f64).sqrt()
    };
    Ok((per_class, overall))
}

/// `matrix[truth][prediction]` counts and the accuracy (trace / total).
pub fn confusion_matrix(predictions: &[usize], truths: &[usize]) -> Result<(Confusion, f64)> {
    check_lengths(predictions, truths)?;
    let mut m = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &t) in predictions.iter().zip(truths) {
        m[cap(t)][cap(p)] += 1;
    }
    let total: u64 = m.iter().flatten().sum();
    let trace: u64 = (0..NUM_CLASSES).map(|k| m[k][k]).sum();
    let acc = if total == 0 { 0.0 } else { trace as f64 / total as f64 };
    Ok((m, acc))
}

/// RMSE computed from confusion counts alone.
pub fn rmse_from_confusion(m: &Confusion) -> (PerClass, f64) {
    let mut sq = [0.0; NUM_CLASSES];
    let mut n = [0u64; NUM_CLASSES];
    for t in 0..NUM_CLASSES {
        for p in 0..NUM_CLASSES {
            let d = p as f64 - t as f64;
            sq[t] += m[t][p] as f64 * d * d;
            n[t] += m[t][p];
        }
    }
    let per_class = std::array::from_fn(|k| (n[k] > 0).then(|| (sq[k] / n[k] as f64).sqrt()));
    let total: u64 = n.iter().sum();
    let overall = if total == 0 {
        0.0
    } else {
        (sq.iter().sum::<f64>() / total as f64).sqrt()
    };
    (per_class, overall)
}

fn ser_per_class<S: Serializer>(v: &PerClass, s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    #[serde(untagged)]
    enum Cell {
        Value(f64),
        Missing(&'static str),
    }
    let cells: Vec<Cell> = v
        .iter()
        .map(|c| c.map_or(Cell::Missing("N/A"), Cell::Value))
        .collect();
    cells.serialize(s)
}

fn de_per_class<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PerClass, D::Error> {
    let cells: Vec<serde_json::Value> = Vec::deserialize(d)?;
    if cells.len() != NUM_CLASSES {
        return Err(serde::de::Error::invalid_length(cells.len(), &"5 per-class entries"));
    }
    Ok(std::array::from_fn(|k| cells[k].as_f64()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub estimator: String,
    pub n_samples: usize,
    #[serde(serialize_with = "ser_per_class", deserialize_with = "de_per_class")]
    pub per_class_rmse: PerClass,
    pub overall_rmse: f64,
    pub confusion: Confusion,
    pub accuracy: f64,
    /// Fraction of samples whose true count exceeds the estimate; volume
    /// estimator only.
    pub upper_bound_violation_rate: Option<f64>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn from_predictions(estimator: &str, predictions: &[usize], truths: &[usize]) -> Result<Self> {
        if truths.is_empty() {
            return Err(PipelineError::EmptyInput);
        }
        let (per_class_rmse, overall_rmse) = rmse(predictions, truths)?;
        let (confusion, accuracy) = confusion_matrix(predictions, truths)?;
        let mut warnings = Vec::new();
        if predictions.len() > 1 && predictions.iter().all(|&p| p == predictions[0]) {
            warnings.push(format!("constant prediction: every output is class {}", predictions[0]));
        }
        Ok(Self {
            estimator: estimator.to_string(),
            n_samples: truths.len(),
            per_class_rmse,
            overall_rmse,
            confusion,
            accuracy,
            upper_bound_violation_rate: None,
            warnings,
        })
    }

    /// Row sums, totals, accuracy and RMSE all agree with the confusion matrix.
    pub fn is_consistent(&self) -> bool {
        let total: u64 = self.confusion.iter().flatten().sum();
        let trace: u64 = (0..NUM_CLASSES).map(|k| self.confusion[k][k]).sum();
        let (per_class, overall) = rmse_from_confusion(&self.confusion);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        total as usize == self.n_samples
            && close(self.accuracy, trace as f64 / total as f64)
            && close(overall, self.overall_rmse)
            && per_class.iter().zip(&self.per_class_rmse).all(|(a, b)| match (a, b) {
                (Some(x), Some(y)) => close(*x, *y),
                (None, None) => true,
                _ => false,
            })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table: per-class and overall RMSE, then the confusion matrix.
    pub fn render_table(&self) -> String {
        let labels = ["0", "1", "2", "3", "4+"];
        let mut out = String::new();
        let _ = writeln!(out, "estimator: {}   samples: {}", self.estimator, self.n_samples);
        let mut header = format!("{:<10}", "RMSE");
        let mut row = format!("{:<10}", "");
        for (l, v) in labels.iter().zip(&self.per_class_rmse) {
            let _ = write!(header, "{l:>8}");
            let _ = write!(row, "{:>8}", v.map_or("N/A".to_string(), |x| format!("{x:.3}")));
        }
        let _ = write!(header, "{:>9}", "overall");
        let _ = write!(row, "{:>9.3}", self.overall_rmse);
        let _ = writeln!(out, "{header}\n{row}");
        let _ = writeln!(out, "accuracy: {:.4}", self.accuracy);
        if let Some(v) = self.upper_bound_violation_rate {
            let _ = writeln!(out, "upper-bound violations: {:.2}%", 100.0 * v);
        }
        let _ = writeln!(out, "confusion (rows = truth, columns = prediction)");
        let _ = write!(out, "{:<6}", "");
        for l in labels {
            let _ = write!(out, "{l:>7}");
        }
        out.push('\n');
        for (l, r) in labels.iter().zip(&self.confusion) {
            let _ = write!(out, "{l:<6}");
            for c in r {
                let _ = write!(out, "{c:>7}");
            }
            out.push('\n');
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 3, 4, 4];
        let (per, overall) = rmse(&t, &t).unwrap();
        assert_eq!(overall, 0.0);
        assert!(per.iter().all(|v| *v == Some(0.0)));
        let (m, acc) = confusion_matrix(&t, &t).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(m[4][4], 2);
    }

    #[test]
    fn arithmetic_example() {
        let (per, overall) = rmse(&[1, 1, 1, 1], &[0, 1, 2, 3]).unwrap();
        assert!((overall - 1.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(per[4], None);
        assert_eq!(per[3], Some(2.0));
    }

    #[test]
    fn counts_above_four_are_capped() {
        let (_, overall) = rmse(&[4], &[6]).unwrap();
        assert_eq!(overall, 0.0);
    }

    #[test]
    fn single_miss() {
        let (m, acc) = confusion_matrix(&[3], &[2]).unwrap();
        assert_eq!(acc, 0.0);
        assert_eq!(m[2][3], 1);
        assert_eq!(m.iter().flatten().sum::<u64>(), 1);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(rmse(&[1], &[1, 2]), Err(PipelineError::LengthMismatch { .. })));
        assert!(confusion_matrix(&[], &[0]).is_err());
    }

    #[test]
    fn report_round_trip_and_na() {
        let r = EvalReport::from_predictions("x", &[0, 1, 1], &[0, 1, 2]).unwrap();
        assert!(r.is_consistent());
        let json = r.to_json();
        assert!(json.contains("\"N/A\""));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.render_table().contains("N/A"));
    }

    #[test]
    fn constant_output_warns_and_empty_errors() {
        let r = EvalReport::from_predictions("x", &[1, 1, 1], &[0, 1, 2]).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(matches!(
            EvalReport::from_predictions("x", &[], &[]),
            Err(PipelineError::EmptyInput)
        ));
    }
}
