use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RecourseError;
use crate::checkpoint::Checkpoint;
use crate::diff::{row, Tensor, Var};
use crate::nn::{standardize, standardize_var, Activation, Mlp};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PolicyMeta {
    dim: usize,
    hidden: Vec<usize>,
    actionable: Vec<usize>,
    seed: u64,
}

/// `h_φ`: maps a standardized row to raw-unit actions on the actionable features.
///
/// The last layer starts at zero, so a fresh policy proposes `θ = 0`.
#[derive(Debug, Clone)]
pub struct ActionPolicy {
    pub mlp: Mlp,
    meta: PolicyMeta,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl ActionPolicy {
    pub fn new(mean: &[f64], std: &[f64], actionable: &[usize], hidden: &[usize], seed: u64) -> Result<Self, RecourseError> {
        let dim = mean.len();
        if std.len() != dim {
            return Err(RecourseError::Invalid("mean and std lengths differ".into()));
        }
        let distinct: std::collections::BTreeSet<usize> = actionable.iter().copied().collect();
        if actionable.is_empty() || distinct.len() != actionable.len() || actionable.iter().any(|&j| j >= dim) {
            return Err(RecourseError::Invalid(format!("bad actionable set {actionable:?} for {dim} features")));
        }
        let mut sizes = vec![dim];
        sizes.extend_from_slice(hidden);
        sizes.push(actionable.len());
        let mut mlp = Mlp::new(&sizes, Activation::Tanh, Activation::Identity, true, &mut rng::stream(seed, "policy"));
        mlp.zero_last_layer();
        let meta = PolicyMeta { dim, hidden: hidden.to_vec(), actionable: actionable.to_vec(), seed };
        Ok(Self { mlp, meta, mean: mean.to_vec(), std: std.to_vec() })
    }

    pub fn actionable(&self) -> &[usize] {
        &self.meta.actionable
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    fn action_scale(&self) -> Vec<f64> {
        self.meta.actionable.iter().map(|&j| self.std[j]).collect()
    }

    /// Actions `θ` (`n×d`, zero outside the actionable set).
    pub fn predict_action(&self, x: &Tensor) -> Tensor {
        let out = self.mlp.forward_values(&standardize(x, &self.mean, &self.std)) * &row(&self.action_scale());
        let mut theta = Tensor::zeros((x.nrows(), self.dim()));
        for (k, &j) in self.meta.actionable.iter().enumerate() {
            theta.column_mut(j).assign(&out.column(k));
        }
        theta
    }

    /// Tape version of [`predict_action`](Self::predict_action) with parameters from `self.mlp.params.bind*`.
    pub fn forward_var<'t>(&self, bound: &[Var<'t>], x: Var<'t>) -> Var<'t> {
        let scale = x.tape().constant(row(&self.action_scale()));
        self.mlp
            .forward(bound, standardize_var(x, &self.mean, &self.std))
            .mul_row(scale)
            .scatter_cols(&self.meta.actionable, self.dim())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("policy", &self.meta);
        ck.insert_params("net", &self.mlp.params);
        ck.insert_row("mean", &self.mean);
        ck.insert_row("std", &self.std);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, RecourseError> {
        let meta: PolicyMeta = ck.config()?;
        let mut p = Self::new(&ck.row("mean")?, &ck.row("std")?, &meta.actionable, &meta.hidden, meta.seed)?;
        ck.load_params("net", &mut p.mlp.params)?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), RecourseError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, RecourseError> {
        Self::from_checkpoint(&Checkpoint::load(path, "policy")?)
    }
}
