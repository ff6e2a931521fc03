//! Uploaded datasets and background training jobs. Everything here is held
//! in memory and is lost on restart.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use sierra_core::ml::{
    confusion_matrix, init_mlp, metrics, predict, train, Activation, ConfusionMatrix, Dataset, Metrics,
    MlError, Prediction, Task, TrainConfig,
};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub dataset_id: u64,
    /// Full layer sizes, input and output included.
    pub layers: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
    /// Rows held out for the confusion matrix; 0 evaluates on training rows.
    #[serde(default)]
    pub test_fraction: f64,
}

fn default_activation() -> Activation {
    Activation::Relu
}
fn default_epochs() -> usize {
    TrainConfig::default().epochs
}
fn default_lr() -> f64 {
    TrainConfig::default().learning_rate
}
fn default_batch() -> usize {
    TrainConfig::default().batch_size
}
fn default_momentum() -> f64 {
    TrainConfig::default().momentum
}

impl TrainRequest {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub rows: usize,
    pub on: &'static str,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub id: u64,
    pub dataset_id: u64,
    pub task: Task,
    pub layers: Vec<usize>,
    pub status: JobStatus,
    pub loss_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetInfo {
    pub id: u64,
    pub task: Task,
    pub rows: usize,
    pub features: usize,
    pub classes: usize,
}

#[derive(Default)]
pub struct MlJobs {
    next: AtomicU64,
    datasets: RwLock<HashMap<u64, (DatasetInfo, Arc<Dataset>)>>,
    jobs: RwLock<HashMap<u64, Job>>,
}

impl MlJobs {
    fn next_id(&self) -> u64 {
        self.next.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn add_dataset(&self, task: Task, ds: Dataset) -> DatasetInfo {
        let info = DatasetInfo {
            id: self.next_id(),
            task,
            rows: ds.len(),
            features: ds.n_features(),
            classes: ds.num_classes(),
        };
        self.datasets.write().unwrap().insert(info.id, (info, Arc::new(ds)));
        info
    }

    pub fn dataset(&self, id: u64) -> Option<(DatasetInfo, Arc<Dataset>)> {
        self.datasets.read().unwrap().get(&id).cloned()
    }

    pub fn job(&self, id: u64) -> Option<Job> {
        self.jobs.read().unwrap().get(&id).cloned()
    }

    /// Registers a running job. The caller runs [`run_job`] off the async
    /// executor and reports back through [`MlJobs::finish`].
    pub fn start(&self, req: &TrainRequest, task: Task) -> u64 {
        let id = self.next_id();
        let job = Job {
            id,
            dataset_id: req.dataset_id,
            task,
            layers: req.layers.clone(),
            status: JobStatus::Running,
            loss_history: Vec::new(),
            final_loss: None,
            evaluation: None,
            error: None,
        };
        self.jobs.write().unwrap().insert(id, job);
        id
    }

    pub fn finish(&self, id: u64, outcome: Result<JobOutput, MlError>) {
        let mut jobs = self.jobs.write().unwrap();
        let Some(job) = jobs.get_mut(&id) else { return };
        match outcome {
            Ok(out) => {
                job.status = JobStatus::Done;
                job.final_loss = out.history.last().copied();
                job.loss_history = out.history;
                job.evaluation = out.evaluation;
            }
            Err(e) => {
                job.status = JobStatus::Failed;
                job.error = Some(e.to_string());
            }
        }
    }
}

pub struct JobOutput {
    pub history: Vec<f64>,
    pub evaluation: Option<Evaluation>,
}

/// Builds, trains and evaluates one model. Blocking; CPU-bound.
pub fn run_job(req: &TrainRequest, task: Task, data: &Dataset) -> Result<JobOutput, MlError> {
    let (train_set, test_set) = data.split(req.test_fraction, req.seed);
    let model = init_mlp(&req.layers, req.activation, task, req.seed)?;
    let (model, history) = train(&model, &train_set, &req.config())?;
    let evaluation = match task {
        Task::Regression => None,
        Task::Classification => {
            let (eval, on) = if test_set.is_empty() {
                (&train_set, "train")
            } else {
                (&test_set, "test")
            };
            let Prediction::Classes(pred) = predict(&model, eval.features.view())? else {
                unreachable!("classification model predicts classes")
            };
            let truth = eval.labels().expect("classification dataset");
            let cm = confusion_matrix(truth, &pred, model.output_size())?;
            Some(Evaluation {
                rows: eval.len(),
                on,
                metrics: metrics(&cm)?,
                confusion: cm,
            })
        }
    };
    Ok(JobOutput { history, evaluation })
}
