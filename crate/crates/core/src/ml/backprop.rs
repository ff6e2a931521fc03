use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::net::{forward, MlpModel, Task};
use super::{loss, LossKind, MlError, Targets};

/// Per-layer gradients, shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    /// Same flat ordering as [`MlpModel::param`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn one_hot(labels: &[usize], k: usize) -> Result<Array2<f64>, MlError> {
    let mut y = Array2::zeros((labels.len(), k));
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(MlError::LabelOutOfRange { label: l, k });
        }
        y[[i, l]] = 1.0;
    }
    Ok(y)
}

/// Gradient of the mean batch loss with respect to every weight and bias.
pub fn grad(
    model: &MlpModel,
    x: ArrayView2<f64>,
    target: &Targets,
    kind: LossKind,
) -> Result<Gradients, MlError> {
    if x.nrows() == 0 {
        return Err(MlError::EmptyBatch);
    }
    if x.nrows() != target.len() {
        return Err(MlError::ShapeMismatch(format!(
            "{} rows for {} targets",
            x.nrows(),
            target.len()
        )));
    }
    let trace = forward(model, x)?;
    let out = trace.output();
    let n = x.nrows() as f64;

    // dL/dZ at the output layer
    let mut delta = match (kind, model.task, target) {
        (LossKind::CrossEntropy, Task::Classification, Targets::Classes(labels)) => {
            (out - &one_hot(labels, out.ncols())?) / n
        }
        (LossKind::Mse, task, Targets::Values(t)) => {
            if t.dim() != out.dim() {
                return Err(MlError::ShapeMismatch(format!(
                    "output {:?} vs target {:?}",
                    out.dim(),
                    t.dim()
                )));
            }
            let d_out = (out - t) * (2.0 / out.len() as f64);
            match task {
                Task::Regression => d_out,
                Task::Classification => {
                    // softmax Jacobian: p ⊙ (g - <g, p>)
                    let inner = (&d_out * out).sum_axis(Axis(1)).insert_axis(Axis(1));
                    out * &(&d_out - &inner)
                }
            }
        }
        (LossKind::CrossEntropy, task, _) => return Err(MlError::UnsupportedLoss(kind, task)),
        (LossKind::Mse, _, Targets::Classes(_)) => {
            return Err(MlError::ShapeMismatch("mse needs real-valued targets".into()))
        }
    };

    let mut layers = Vec::with_capacity(model.layers.len());
    for l in (0..model.layers.len()).rev() {
        let a_prev = &trace.activations[l];
        let dw = delta.t().dot(a_prev);
        let db = delta.sum_axis(Axis(0));
        if l > 0 {
            let da = delta.dot(&model.layers[l].weights);
            delta = da * &model.activation.derivative(&trace.pre[l - 1]);
        }
        layers.push((dw, db));
    }
    layers.reverse();
    Ok(Gradients { layers })
}

fn batch_loss(model: &MlpModel, x: ArrayView2<f64>, target: &Targets, kind: LossKind) -> Result<f64, MlError> {
    let out = model.outputs(x)?;
    loss(out.view(), target, kind)
}

/// Largest relative disagreement between the analytic gradient and central
/// differences `(L(θ+h) - L(θ-h)) / 2h`, over every parameter:
/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check(
    model: &MlpModel,
    x: ArrayView2<f64>,
    target: &Targets,
    kind: LossKind,
    h: f64,
) -> Result<f64, MlError> {
    if x.nrows() == 0 {
        return Err(MlError::EmptyBatch);
    }
    let analytic = grad(model, x, target, kind)?.flat();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let theta = model.param(i);
        probe.set_param(i, theta + h);
        let up = batch_loss(&probe, x, target, kind)?;
        probe.set_param(i, theta - h);
        let down = batch_loss(&probe, x, target, kind)?;
        probe.set_param(i, theta);
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
