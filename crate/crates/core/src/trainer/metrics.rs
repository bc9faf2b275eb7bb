use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::ccc;
use crate::labels::{NODE_NAMES, NUM_CLASSES};

/// Square confusion matrix indexed `[truth][prediction]`.
pub type Confusion = Vec<Vec<u64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_class_accuracy: f64,
    pub accuracy: f64,
    pub f1_macro: f64,
    /// `0.67 * f1_macro + 0.33 * accuracy`.
    pub composite: f64,
    pub ccc_v: f64,
    pub ccc_a: f64,
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize]) -> Result<Confusion> {
    if truth.len() != pred.len() {
        return Err(Error::shape("confusion", (truth.len(), 1), (pred.len(), 1)));
    }
    let mut m = vec![vec![0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= NUM_CLASSES || p >= NUM_CLASSES {
            return Err(Error::Domain(format!("class id out of range: truth {t}, prediction {p}")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

fn class_name(i: usize, n: usize) -> String {
    if n == NUM_CLASSES {
        NODE_NAMES[i].to_string()
    } else {
        format!("class {i}")
    }
}

/// Mean over classes of per-class recall.
pub fn mean_class_accuracy<R: AsRef<[u64]>>(confusion: &[R]) -> Result<f64> {
    let n = confusion.len();
    let mut total = 0.0;
    for (i, row) in confusion.iter().enumerate() {
        let row = row.as_ref();
        let support: u64 = row.iter().sum();
        if support == 0 {
            return Err(Error::Metric(format!(
                "{} has no samples in the evaluation split",
                class_name(i, n)
            )));
        }
        total += row[i] as f64 / support as f64;
    }
    Ok(total / n as f64)
}

/// Fraction of all samples on the diagonal.
pub fn overall_accuracy<R: AsRef<[u64]>>(confusion: &[R]) -> f64 {
    let all: u64 = confusion.iter().map(|r| r.as_ref().iter().sum::<u64>()).sum();
    let diag: u64 = confusion.iter().enumerate().map(|(i, r)| r.as_ref()[i]).sum();
    if all == 0 {
        0.0
    } else {
        diag as f64 / all as f64
    }
}

/// Unweighted mean of per-class F1. A class with no true positives scores 0.
pub fn f1_macro<R: AsRef<[u64]>>(confusion: &[R]) -> f64 {
    let n = confusion.len();
    let mut total = 0.0;
    for i in 0..n {
        let tp = confusion[i].as_ref()[i] as f64;
        let support: u64 = confusion[i].as_ref().iter().sum();
        let predicted: u64 = confusion.iter().map(|r| r.as_ref()[i]).sum();
        let denom = (support + predicted) as f64;
        if tp > 0.0 {
            total += 2.0 * tp / denom;
        }
    }
    total / n as f64
}

/// `0.67 * f1 + 0.33 * acc`, evaluated as `(67 f1 + 33 acc) / 100`.
pub fn composite_metric(f1: f64, acc: f64) -> Result<f64> {
    for (name, v) in [("f1", f1), ("accuracy", acc)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok((67.0 * f1 + 33.0 * acc) / 100.0)
}

/// Exact CCC of valence and arousal predictions over a full split.
pub fn regression_ccc(
    v_pred: &[f64],
    v_true: &[f64],
    a_pred: &[f64],
    a_true: &[f64],
) -> Result<(f64, f64)> {
    let wrap = |dim: &str, e: Error| Error::Metric(format!("{dim} ccc: {e}"));
    let v = ccc(v_pred, v_true).map_err(|e| wrap("valence", e))?;
    let a = ccc(a_pred, a_true).map_err(|e| wrap("arousal", e))?;
    Ok((v, a))
}
