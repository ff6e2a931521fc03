use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{MlpModel, Task};
use super::{grad, loss, Dataset, LossKind, MlError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 32,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlError> {
        // a zero rate is allowed: it is a useful no-op for testing
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(MlError::BadConfig("learning_rate must be >= 0".into()));
        }
        if self.epochs == 0 {
            return Err(MlError::BadConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(MlError::BadConfig("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(MlError::BadConfig("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

pub(crate) fn loss_kind(task: Task) -> LossKind {
    match task {
        Task::Classification => LossKind::CrossEntropy,
        Task::Regression => LossKind::Mse,
    }
}

/// Minibatch SGD with classical momentum (`v ← μv − ηg; θ ← θ + v`).
/// Rows are reshuffled every epoch from a generator seeded with `cfg.seed`.
/// The returned history holds the full-dataset loss after each epoch.
pub fn train(
    model: &MlpModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<f64>), MlError> {
    cfg.validate()?;
    data.check_for(model)?;
    let kind = loss_kind(model.task);
    let mut model = model.clone();
    let mut velocity: Vec<(Array2<f64>, Array1<f64>)> = model
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(cfg.batch_size) {
            let x = data.features.select(Axis(0), rows);
            let y = data.targets.select(rows);
            let g = grad(&model, x.view(), &y, kind)?;
            for ((layer, (vw, vb)), (gw, gb)) in
                model.layers.iter_mut().zip(&mut velocity).zip(g.layers)
            {
                vw.zip_mut_with(&gw, |v, &g| *v = cfg.momentum * *v - cfg.learning_rate * g);
                vb.zip_mut_with(&gb, |v, &g| *v = cfg.momentum * *v - cfg.learning_rate * g);
                layer.weights += &*vw;
                layer.bias += &*vb;
            }
        }
        if !model.all_finite() {
            return Err(MlError::Diverged(epoch));
        }
        let out = model.outputs(data.features.view())?;
        history.push(loss(out.view(), &data.targets, kind)?);
    }
    Ok((model, history))
}
