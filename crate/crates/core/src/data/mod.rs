//! Synthetic datasets drawn from the built-in (or user-supplied) SCMs.

mod generate;
mod io;
mod label;

pub use generate::{gen_adult, gen_loan, generate, observational, Counts, GenReport};
pub use io::{read_bundle, write_bundle, FEATURES_FILE, LABELS_FILE, NOISE_FILE};
pub use label::{adult_income, loan_label, LabelRule};

use ndarray::Axis;

use crate::diff::Tensor;
use crate::scm::ScmError;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("rejection sampling stalled: {0}")]
    LowAcceptance(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file {0}")]
    Missing(String),
    #[error("{file}:{line}: {msg}")]
    Schema { file: String, line: usize, msg: String },
}

/// One split: features, stored noise, labels (0 normal / 1 anomalous) and raw label values.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub x: Tensor,
    pub u: Tensor,
    pub labels: Vec<u8>,
    pub values: Vec<f64>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn anomalies(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Rows with the given indices.
    pub fn select(&self, rows: &[usize]) -> Split {
        Split {
            x: self.x.select(Axis(0), rows),
            u: self.u.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            values: rows.iter().map(|&r| self.values[r]).collect(),
        }
    }
}

/// Normal-only training rows plus a mixed unlabeled split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub names: Vec<String>,
    pub train: Split,
    pub unlabeled: Split,
    /// Per-feature std of the training rows (zero replaced by one).
    pub std: Vec<f64>,
    /// Per-feature mean of the training rows.
    pub mean: Vec<f64>,
}

/// Column means and population standard deviations; zero deviations become 1.
pub fn column_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let std = x
        .std_axis(Axis(0), 0.0)
        .iter()
        .map(|&s| if s > 1e-12 { s } else { 1.0 })
        .collect();
    (mean, std)
}

impl DatasetBundle {
    pub fn new(names: Vec<String>, train: Split, unlabeled: Split) -> Self {
        let (mean, std) = column_stats(&train.x);
        Self { names, train, unlabeled, mean, std }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Indices of the named features.
    pub fn indices(&self, names: &[&str]) -> Result<Vec<usize>, DataError> {
        names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| DataError::Invalid(format!("unknown feature {n}")))
            })
            .collect()
    }
}
