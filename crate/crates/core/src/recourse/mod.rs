//! Action policies that propose recourse for detected anomalies and the loop that trains them.

mod policy;

pub use policy::ActionPolicy;

use serde::{Deserialize, Serialize};

use crate::checkpoint::CheckpointError;
use crate::detect::{DetectError, Detector, DetectorKind};
use crate::diff::{Optimizer, Sgd, Tape, Tensor, Var};
use crate::engine::{EngineError, GraphVae};
use crate::nn::minibatches;
use crate::rng;
use crate::scm::Scm;

#[derive(Debug, thiserror::Error)]
pub enum RecourseError {
    #[error("{0}")]
    Invalid(String),
    #[error("non-finite loss at epoch {epoch}, sample {sample}")]
    NonFinite { epoch: usize, sample: usize },
    #[error("detector is a {found}, expected a {expected}")]
    DetectorKind { expected: &'static str, found: &'static str },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Per-feature cost weights `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostVector(pub Vec<f64>);

impl CostVector {
    pub fn new(c: Vec<f64>, actionable: &[usize]) -> Result<Self, RecourseError> {
        if let Some(&j) = actionable.iter().find(|&&j| j >= c.len() || !(c[j] > 0.0 && c[j].is_finite())) {
            return Err(RecourseError::Invalid(format!("cost of actionable feature {j} must be positive")));
        }
        Ok(Self(c))
    }

    /// `‖c·θ‖₂` of one action vector.
    pub fn norm(&self, theta: &[f64]) -> f64 {
        self.0.iter().zip(theta).map(|(c, t)| (c * t) * (c * t)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    Learned,
    Exact,
}

/// ADCAR propagates actions through a causal engine; NaiveAR adds them in place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Adcar,
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub engine: EngineChoice,
    pub baseline: Baseline,
}

impl Default for RecourseConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            alpha: 0.5,
            lr: 0.1,
            epochs: 500,
            batch_size: 32,
            hidden: vec![128, 128],
            seed: 0,
            engine: EngineChoice::Learned,
            baseline: Baseline::Adcar,
        }
    }
}

impl RecourseConfig {
    /// Defaults for a built-in dataset (`alpha` 0.5 on Loan, 0.3 on Adult).
    pub fn for_dataset(name: &str) -> Self {
        let alpha = if name == "adult" { 0.3 } else { 0.5 };
        Self { alpha, ..Self::default() }
    }

    /// Same schedule and architecture with the NaiveAR counterfactual.
    pub fn naive(&self) -> Self {
        Self { baseline: Baseline::Naive, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), RecourseError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(RecourseError::Invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(RecourseError::Invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(RecourseError::Invalid("learning rate and batch size must be positive".into()));
        }
        Ok(())
    }
}

/// `max{g − α·τ, 0} + λ‖c·θ‖₂`.
pub fn recourse_loss(score: f64, tau: f64, alpha: f64, lambda: f64, cost: &CostVector, theta: &[f64]) -> f64 {
    (score - alpha * tau).max(0.0) + lambda * cost.norm(theta)
}

fn expect_kind(det: &Detector, kind: DetectorKind) -> Result<(), RecourseError> {
    if det.kind() == kind {
        Ok(())
    } else {
        Err(RecourseError::DetectorKind { expected: kind.name(), found: det.kind().name() })
    }
}

/// Recourse loss with the SVDD score `‖r(x(θ)) − μ‖₂`.
pub fn loss_svdd(det: &Detector, x_cf: &[f64], tau: f64, alpha: f64, lambda: f64, cost: &CostVector, theta: &[f64]) -> Result<f64, RecourseError> {
    expect_kind(det, DetectorKind::Svdd)?;
    Ok(recourse_loss(det.score(x_cf)?, tau, alpha, lambda, cost, theta))
}

/// Recourse loss with the reconstruction score `‖x(θ) − AE(x(θ))‖₂`.
pub fn loss_ae(det: &Detector, x_cf: &[f64], tau: f64, alpha: f64, lambda: f64, cost: &CostVector, theta: &[f64]) -> Result<f64, RecourseError> {
    expect_kind(det, DetectorKind::Ae)?;
    Ok(recourse_loss(det.score(x_cf)?, tau, alpha, lambda, cost, theta))
}

/// `x + θ` without propagation.
pub fn naive_counterfactual(x: &Tensor, theta: &Tensor) -> Tensor {
    x + theta
}

/// How counterfactuals `x(θ)` are produced during training and evaluation.
#[derive(Clone, Copy)]
pub enum CfModel<'a> {
    Learned(&'a GraphVae),
    /// Structural equations with stored noise; `u` is aligned with the rows being explained.
    Exact { scm: &'a Scm, u: &'a Tensor },
    Naive,
}

impl<'a> CfModel<'a> {
    /// Differentiable counterfactuals of `x` (rows `rows` of the explained set).
    pub fn counterfactual_var<'t>(&self, x: &Tensor, rows: &[usize], theta: Var<'t>, actionable: &[usize]) -> Result<Var<'t>, RecourseError> {
        match *self {
            CfModel::Learned(engine) => Ok(engine.soft_intervention_var(x, theta, actionable)?),
            CfModel::Exact { scm, u } => {
                let ub = u.select(ndarray::Axis(0), rows);
                Ok(scm.counterfactual_tape(x, &ub, theta, actionable))
            }
            CfModel::Naive => Ok(theta + theta.tape().constant(x.clone())),
        }
    }

    pub fn counterfactual(&self, x: &Tensor, theta: &Tensor, actionable: &[usize]) -> Result<Tensor, RecourseError> {
        let tape = Tape::new();
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let out = self.counterfactual_var(x, &rows, tape.constant(theta.clone()), actionable)?;
        Ok((*out.value()).clone())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_hinge: f64,
    pub mean_cost: f64,
}

/// Sums over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub loss: f64,
    pub hinge: f64,
    pub cost: f64,
}

/// Everything the objective needs besides the policy.
pub struct Objective<'a> {
    pub detector: &'a Detector,
    pub tau: f64,
    pub cf: CfModel<'a>,
    pub cost: &'a CostVector,
    pub lambda: f64,
    pub alpha: f64,
}

impl Objective<'_> {
    /// Per-row loss terms for fixed actions.
    pub fn terms(&self, x: &Tensor, rows: &[usize], theta: &Tensor, actionable: &[usize]) -> Result<Vec<(f64, f64)>, RecourseError> {
        let tape = Tape::new();
        let xcf = self.cf.counterfactual_var(x, rows, tape.constant(theta.clone()), actionable)?;
        let scores = self.detector.score_var(xcf).value();
        Ok(theta
            .rows()
            .into_iter()
            .zip(scores.iter())
            .map(|(t, s)| ((s - self.alpha * self.tau).max(0.0), self.cost.norm(t.as_slice().expect("contiguous"))))
            .collect())
    }

    /// Gradient of the summed batch loss with respect to `theta` (`n×d`).
    ///
    /// Where `c·θ = 0` the norm is not differentiable; the minimum-norm
    /// element of the subdifferential is used, so a row stays at `θ = 0`
    /// until the hinge gradient outweighs the cost.
    pub fn theta_gradient(&self, x: &Tensor, rows: &[usize], theta: &Tensor, actionable: &[usize]) -> Result<(Tensor, BatchStats), RecourseError> {
        let tape = Tape::new();
        let th = tape.var(theta.clone());
        let xcf = self.cf.counterfactual_var(x, rows, th, actionable)?;
        let hinge = self.detector.score_var(xcf).shift(-self.alpha * self.tau).hinge();
        let hinge_sum = hinge.sum();
        let mut stats = BatchStats { hinge: hinge_sum.item(), ..Default::default() };
        let mut g = tape.backward(hinge_sum).map_err(|e| RecourseError::Invalid(e.to_string()))?.get_or_zeros(th);
        let c = &self.cost.0;
        for (mut gr, t) in g.rows_mut().into_iter().zip(theta.rows()) {
            let norm = self.cost.norm(t.as_slice().expect("contiguous"));
            stats.cost += norm;
            if self.lambda == 0.0 {
                continue;
            }
            if norm > 0.0 {
                for j in 0..t.len() {
                    gr[j] += self.lambda * c[j] * c[j] * t[j] / norm;
                }
                continue;
            }
            // Subdifferential at 0: {λ c⊙w : ‖w‖ ≤ 1}; pick w against the hinge gradient.
            let w: Vec<f64> = (0..t.len())
                .map(|j| if actionable.contains(&j) { -gr[j] / (self.lambda * c[j]) } else { 0.0 })
                .collect();
            let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if wn <= 1.0 {
                gr.fill(0.0);
                continue;
            }
            for j in 0..t.len() {
                gr[j] += self.lambda * c[j] * w[j] / wn;
            }
        }
        stats.loss = stats.hinge + self.lambda * stats.cost;
        Ok((g, stats))
    }
}

/// Accumulates `∂L/∂φ` of the summed batch loss into the policy's gradients
/// (scaled by `1/n`) and returns the batch sums.
pub fn accumulate_gradient(policy: &mut ActionPolicy, obj: &Objective, x: &Tensor, rows: &[usize]) -> Result<BatchStats, RecourseError> {
    let theta = policy.predict_action(x);
    let (g, stats) = obj.theta_gradient(x, rows, &theta, policy.actionable())?;
    let tape = Tape::new();
    let bound = policy.mlp.params.bind(&tape);
    let th = policy.forward_var(&bound, tape.constant(x.clone()));
    let grads = tape.backward_with_seed(th, g / x.nrows() as f64);
    policy.mlp.params.accumulate(&grads, &bound);
    Ok(stats)
}

/// Trains `policy` on the anomalies `x` (rows of the explained set).
pub fn train_policy(
    policy: &mut ActionPolicy,
    x: &Tensor,
    detector: &Detector,
    tau: f64,
    cf: CfModel,
    cost: &CostVector,
    config: &RecourseConfig,
) -> Result<Vec<EpochLog>, RecourseError> {
    config.validate()?;
    if x.nrows() == 0 {
        return Err(RecourseError::Invalid("no anomalies to train on".into()));
    }
    if !(tau > 0.0) {
        return Err(RecourseError::Invalid(format!("threshold must be positive, got {tau}")));
    }
    let cf = if config.baseline == Baseline::Naive { CfModel::Naive } else { cf };
    let obj = Objective { detector, tau, cf, cost, lambda: config.lambda, alpha: config.alpha };
    let mut opt = Sgd::new(config.lr);
    let mut r = rng::stream(config.seed, "policy-batches");
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut total = BatchStats::default();
        for idx in minibatches(x.nrows(), config.batch_size, &mut r) {
            let xb = x.select(ndarray::Axis(0), &idx);
            let s = accumulate_gradient(policy, &obj, &xb, &idx)?;
            if !s.loss.is_finite() {
                let bad = obj.terms(&xb, &idx, &policy.predict_action(&xb), policy.actionable())?;
                let at = bad.iter().position(|(h, c)| !(h + c).is_finite()).unwrap_or(0);
                return Err(RecourseError::NonFinite { epoch, sample: idx[at] });
            }
            opt.step(&mut policy.mlp.params);
            total.loss += s.loss;
            total.hinge += s.hinge;
            total.cost += s.cost;
        }
        let n = x.nrows() as f64;
        log.push(EpochLog { epoch, mean_loss: total.loss / n, mean_hinge: total.hinge / n, mean_cost: total.cost / n });
    }
    Ok(log)
}

/// Writes the training log as CSV.
pub fn write_log(path: &std::path::Path, log: &[EpochLog]) -> Result<(), std::io::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests;
