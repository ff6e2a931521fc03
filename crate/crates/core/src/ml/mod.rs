//! Fully connected network toolkit: initialization, forward pass, losses,
//! backpropagation with a finite-difference checker, minibatch SGD with
//! momentum, and confusion-matrix reporting. Everything is `f64`.

mod backprop;
mod dataset;
mod loss;
mod metrics;
mod net;
mod train;

pub use backprop::{grad, grad_check, Gradients};
pub use dataset::{parse_dataset_csv, Dataset, DatasetError};
pub use loss::{loss, LossKind};
pub use metrics::{confusion_matrix, metrics, ConfusionMatrix, Metrics};
pub use net::{argmax_rows, forward, init_mlp, predict, Activation, Layer, MlpModel, Prediction, Task, Trace};
pub use train::{train, TrainConfig};

use ndarray::Array2;
use thiserror::Error;

/// Training targets: class indices or a real-valued matrix (n×outputs).
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Array2<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(rows.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => Targets::Values(v.select(ndarray::Axis(0), rows)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlError {
    #[error("network needs at least an input and an output layer, all of size >= 1 (got {0:?})")]
    BadArchitecture(Vec<usize>),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("{0:?} loss does not apply to a {1:?} network")]
    UnsupportedLoss(LossKind, Task),
    #[error("label {label} outside [0, {k})")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("training diverged at epoch {0}: parameters became non-finite")]
    Diverged(usize),
}
