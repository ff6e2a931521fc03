use serde::{Deserialize, Serialize};

use super::MlError;

/// `counts[i][j]` = rows of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

pub fn confusion_matrix(
    truth: &[usize],
    predicted: &[usize],
    k: usize,
) -> Result<ConfusionMatrix, MlError> {
    if truth.len() != predicted.len() {
        return Err(MlError::ShapeMismatch(format!(
            "{} true labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= k {
                return Err(MlError::LabelOutOfRange { label, k });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

/// Precision and recall are `None` where the denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, MlError> {
    let total = cm.total();
    if total == 0 {
        return Err(MlError::EmptyMatrix);
    }
    Ok(Metrics {
        accuracy: cm.trace() as f64 / total as f64,
        precision: (0..cm.k).map(|j| ratio(cm.counts[j][j], cm.col_sum(j))).collect(),
        recall: (0..cm.k).map(|i| ratio(cm.counts[i][i], cm.row_sum(i))).collect(),
    })
}
