use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::net::{MlpModel, Task};
use super::{MlError, Targets};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub targets: Targets,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, targets: Targets) -> Result<Self, MlError> {
        if features.nrows() != targets.len() {
            return Err(MlError::ShapeMismatch(format!(
                "{} feature rows vs {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(MlError::NonFiniteInput);
        }
        let feature_names = (0..features.ncols()).map(|i| format!("x{i}")).collect();
        Ok(Self {
            features,
            targets,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Largest label + 1; zero for regression data.
    pub fn num_classes(&self) -> usize {
        match &self.targets {
            Targets::Classes(c) => c.iter().max().map_or(0, |m| m + 1),
            Targets::Values(_) => 0,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes(c) => Some(c),
            Targets::Values(_) => None,
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            targets: self.targets.select(rows),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Seeded shuffle, then the first `round(n * test_fraction)` rows become
    /// the test set. At least one row always stays in training.
    pub fn split(&self, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((n as f64 * test_fraction.clamp(0.0, 1.0)).round() as usize).min(n.saturating_sub(1));
        let (test, train) = order.split_at(n_test);
        (self.subset(train), self.subset(test))
    }

    /// Checks that this data can train `model`.
    pub fn check_for(&self, model: &MlpModel) -> Result<(), MlError> {
        if self.is_empty() {
            return Err(MlError::EmptyBatch);
        }
        if self.n_features() != model.input_size() {
            return Err(MlError::ShapeMismatch(format!(
                "dataset has {} features, network expects {}",
                self.n_features(),
                model.input_size()
            )));
        }
        match (&self.targets, model.task) {
            (Targets::Classes(c), Task::Classification) => {
                let k = model.output_size();
                match c.iter().find(|&&l| l >= k) {
                    Some(&label) => Err(MlError::LabelOutOfRange { label, k }),
                    None => Ok(()),
                }
            }
            (Targets::Values(v), Task::Regression) if v.ncols() == model.output_size() => Ok(()),
            _ => Err(MlError::ShapeMismatch(
                "targets do not match the network's output head".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}, column {column}: '{value}' is not a number")]
    NonNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: label '{value}' is not a non-negative integer")]
    BadLabel { line: u64, value: String },
    #[error("need at least one feature column and a label column")]
    TooFewColumns,
    #[error("dataset has no rows")]
    Empty,
    #[error("classification needs at least 2 classes, found {0}")]
    TooFewClasses(usize),
}

/// Parses a CSV with a header row. The last column is the target: an integer
/// class label for classification, a number for regression.
pub fn parse_dataset_csv(text: &str, task: Task) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| DatasetError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() < 2 {
        return Err(DatasetError::TooFewColumns);
    }
    let d = header.len() - 1;
    let feature_names: Vec<String> = header.iter().take(d).map(str::to_string).collect();

    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        for (j, cell) in rec.iter().take(d).enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => flat.push(v),
                _ => {
                    return Err(DatasetError::NonNumeric {
                        line,
                        column: feature_names[j].clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        let target = &rec[d];
        match task {
            Task::Classification => match target.parse::<usize>() {
                Ok(l) => labels.push(l),
                Err(_) => {
                    return Err(DatasetError::BadLabel {
                        line,
                        value: target.to_string(),
                    })
                }
            },
            Task::Regression => match target.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(DatasetError::NonNumeric {
                        line,
                        column: header[d].to_string(),
                        value: target.to_string(),
                    })
                }
            },
        }
    }
    let n = flat.len() / d;
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    let features = Array2::from_shape_vec((n, d), flat).expect("row width checked by csv reader");
    let targets = match task {
        Task::Classification => {
            let k = labels.iter().max().map_or(0, |m| m + 1);
            if k < 2 {
                return Err(DatasetError::TooFewClasses(k));
            }
            Targets::Classes(labels)
        }
        Task::Regression => Targets::Values(Array2::from_shape_vec((n, 1), values).unwrap()),
    };
    Ok(Dataset {
        features,
        targets,
        feature_names,
    })
}
