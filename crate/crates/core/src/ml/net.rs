use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Tanh => z.mapv(f64::tanh),
            Activation::Identity => z.clone(),
        }
    }

    /// Derivative evaluated at the pre-activation `z`. ReLU uses 0 at 0.
    pub(crate) fn derivative(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Activation::Tanh => z.mapv(|v| {
                let t = v.tanh();
                1.0 - t * t
            }),
            Activation::Identity => Array2::ones(z.raw_dim()),
        }
    }
}

/// Output head: softmax probabilities or raw values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// out × in
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub task: Task,
    pub seed: u64,
}

/// Glorot-uniform weights, zero biases. Same arguments, same bits.
pub fn init_mlp(
    layer_sizes: &[usize],
    activation: Activation,
    task: Task,
    seed: u64,
) -> Result<MlpModel, MlError> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(MlError::BadArchitecture(layer_sizes.to_vec()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                weights: Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    rng.gen_range(-limit..=limit)
                }),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpModel {
        layer_sizes: layer_sizes.to_vec(),
        layers,
        activation,
        task,
        seed,
    })
}

impl MlpModel {
    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flat view over all parameters: each layer's weights (row-major) then
    /// its biases.
    pub fn param(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            if i < l.weights.len() {
                return l.weights.as_slice().unwrap()[i];
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut i: usize, v: f64) {
        for l in &mut self.layers {
            if i < l.weights.len() {
                l.weights.as_slice_mut().unwrap()[i] = v;
                return;
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                l.bias[i] = v;
                return;
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Intermediates of a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Layer inputs: `activations[0]` is the batch, the last entry the output.
    pub activations: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pub pre: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().unwrap()
    }
}

pub(crate) fn check_input(model: &MlpModel, x: &ArrayView2<f64>) -> Result<(), MlError> {
    if x.ncols() != model.input_size() {
        return Err(MlError::ShapeMismatch(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            model.input_size()
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(MlError::NonFiniteInput);
    }
    Ok(())
}

/// Forward pass over an n×d batch, keeping intermediates.
pub fn forward(model: &MlpModel, x: ArrayView2<f64>) -> Result<Trace, MlError> {
    check_input(model, &x)?;
    let mut activations = vec![x.to_owned()];
    let mut pre = Vec::with_capacity(model.layers.len());
    let last = model.layers.len() - 1;
    for (i, layer) in model.layers.iter().enumerate() {
        let z = activations[i].dot(&layer.weights.t()) + &layer.bias;
        let a = if i == last {
            match model.task {
                Task::Classification => softmax_rows(&z),
                Task::Regression => z.clone(),
            }
        } else {
            model.activation.apply(&z)
        };
        pre.push(z);
        activations.push(a);
    }
    Ok(Trace { activations, pre })
}

impl MlpModel {
    /// Output for a batch (probabilities for classification).
    pub fn outputs(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, MlError> {
        forward(self, x).map(|mut t| t.activations.pop().unwrap())
    }

    /// Output for a single input vector.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, MlError> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| MlError::ShapeMismatch(e.to_string()))?;
        Ok(self.outputs(view)?.row(0).to_vec())
    }
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(probs: ArrayView2<f64>) -> Vec<usize> {
    probs
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Classes(Vec<usize>),
    Values(Array2<f64>),
}

pub fn predict(model: &MlpModel, x: ArrayView2<f64>) -> Result<Prediction, MlError> {
    let out = model.outputs(x)?;
    Ok(match model.task {
        Task::Classification => Prediction::Classes(argmax_rows(out.view())),
        Task::Regression => Prediction::Values(out),
    })
}
