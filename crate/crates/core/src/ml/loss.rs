use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{MlError, Targets};

/// Floor applied to probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Mean loss over the batch. Cross-entropy takes class indices against
/// probability rows; MSE averages over every element of a value matrix.
pub fn loss(pred: ArrayView2<f64>, target: &Targets, kind: LossKind) -> Result<f64, MlError> {
    if pred.nrows() != target.len() {
        return Err(MlError::ShapeMismatch(format!(
            "{} predictions for {} targets",
            pred.nrows(),
            target.len()
        )));
    }
    if pred.nrows() == 0 {
        return Err(MlError::EmptyBatch);
    }
    match (kind, target) {
        (LossKind::CrossEntropy, Targets::Classes(labels)) => {
            let k = pred.ncols();
            let mut total = 0.0;
            for (row, &label) in pred.rows().into_iter().zip(labels) {
                if label >= k {
                    return Err(MlError::LabelOutOfRange { label, k });
                }
                total -= row[label].max(LOG_CLAMP).ln();
            }
            Ok(total / labels.len() as f64)
        }
        (LossKind::Mse, Targets::Values(t)) => {
            if t.dim() != pred.dim() {
                return Err(MlError::ShapeMismatch(format!(
                    "prediction {:?} vs target {:?}",
                    pred.dim(),
                    t.dim()
                )));
            }
            let sq: f64 = pred.iter().zip(t.iter()).map(|(p, y)| (p - y) * (p - y)).sum();
            Ok(sq / pred.len() as f64)
        }
        (LossKind::CrossEntropy, Targets::Values(_)) => Err(MlError::ShapeMismatch(
            "cross-entropy needs class labels".into(),
        )),
        (LossKind::Mse, Targets::Classes(_)) => Err(MlError::ShapeMismatch(
            "mse needs real-valued targets".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn mse_of_exact_fit_is_zero() {
        let p = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(loss(p.view(), &Targets::Values(p.clone()), LossKind::Mse).unwrap(), 0.0);
    }

    #[test]
    fn mse_value() {
        let p = array![[1.0], [3.0]];
        let t = array![[0.0], [1.0]];
        // (1 + 4) / 2
        assert_eq!(loss(p.view(), &Targets::Values(t), LossKind::Mse).unwrap(), 2.5);
    }

    #[test]
    fn uniform_cross_entropy_is_ln_k() {
        let p = Array2::from_elem((3, 4), 0.25);
        let l = loss(p.view(), &Targets::Classes(vec![0, 3, 1]), LossKind::CrossEntropy).unwrap();
        assert!((l - 1.386294).abs() < 1e-6);
        assert!((l - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_has_zero_cross_entropy() {
        let p = array![[1.0, 0.0], [0.0, 1.0]];
        let l = loss(p.view(), &Targets::Classes(vec![0, 1]), LossKind::CrossEntropy).unwrap();
        assert_eq!(l, 0.0);
        // a confident miss is capped by the clamp
        let l = loss(p.view(), &Targets::Classes(vec![1, 0]), LossKind::CrossEntropy).unwrap();
        assert!((l - (-LOG_CLAMP.ln())).abs() < 1e-9);
    }

    #[test]
    fn mismatches() {
        let p = array![[0.5, 0.5]];
        assert!(matches!(
            loss(p.view(), &Targets::Classes(vec![0, 1]), LossKind::CrossEntropy),
            Err(MlError::ShapeMismatch(_))
        ));
        assert!(matches!(
            loss(p.view(), &Targets::Classes(vec![2]), LossKind::CrossEntropy),
            Err(MlError::LabelOutOfRange { label: 2, k: 2 })
        ));
        assert!(matches!(
            loss(p.view(), &Targets::Values(array![[1.0]]), LossKind::Mse),
            Err(MlError::ShapeMismatch(_))
        ));
    }
}
