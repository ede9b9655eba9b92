//! Flipping ratios, action norms, sweeps and case-study tables.

mod case;
mod sweep;

pub use case::{case_report, CaseRow};
pub use sweep::{default_values, run_sweep, spearman, SweepGrid, SweepParam, SweepPoint};

use serde::Serialize;

use crate::data::{LabelRule, Split};
use crate::detect::Detector;
use crate::diff::Tensor;
use crate::engine::GraphVae;
use crate::recourse::{train_policy, ActionPolicy, Baseline, CfModel, CostVector, EngineChoice, EpochLog, RecourseConfig, RecourseError};
use crate::scm::{ExogenousRecord, Scm};

/// Fraction of counterfactual scores at or below `tau`.
pub fn flip_ratio(scores: &[f64], tau: f64) -> Result<f64, RecourseError> {
    if scores.is_empty() {
        return Err(RecourseError::Invalid("no counterfactuals to score".into()));
    }
    Ok(scores.iter().filter(|&&s| s <= tau).count() as f64 / scores.len() as f64)
}

/// Replays stored noise under `theta` and applies the label rule. Returns the
/// ratio of rows that become normal and the per-row mask.
pub fn ground_truth_flip(scm: &Scm, x: &Tensor, u: &Tensor, theta: &Tensor, rule: &LabelRule) -> Result<(f64, Vec<bool>), RecourseError> {
    if x.nrows() == 0 {
        return Err(RecourseError::Invalid("no rows to evaluate".into()));
    }
    if u.dim() != x.dim() || theta.dim() != x.dim() {
        return Err(RecourseError::Invalid("every row needs a stored noise record and an action".into()));
    }
    let mut mask = Vec::with_capacity(x.nrows());
    for i in 0..x.nrows() {
        let cf = scm
            .counterfactual_exact(&x.row(i).to_vec(), &ExogenousRecord(u.row(i).to_vec()), &theta.row(i).to_vec())
            .map_err(|e| RecourseError::Invalid(format!("row {i}: {e}")))?;
        mask.push(rule.is_normal(&cf));
    }
    let ratio = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
    Ok((ratio, mask))
}

/// Mean and population std of `‖c·θ‖₂` over masked rows; `None` when nothing is masked.
pub fn action_norm_on_flipped(theta: &Tensor, cost: &CostVector, mask: &[bool]) -> Option<(f64, f64)> {
    let norms: Vec<f64> = theta
        .rows()
        .into_iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(t, _)| cost.norm(&t.to_vec()))
        .collect();
    mean_std(&norms)
}

pub(crate) fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    Some((m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()))
}

/// Which rows the action norm is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormBasis {
    #[default]
    GroundTruth,
    Detector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlipReport {
    pub n_detected: usize,
    /// Detected rows that are true anomalies; the ground-truth ratio is over these.
    pub n_true: usize,
    pub flip_ratio_detector: f64,
    pub flip_ratio_ground_truth: f64,
    pub norm_mean: Option<f64>,
    pub norm_std: Option<f64>,
}

/// Everything shared by the recourse runs on one dataset: the rows to explain
/// (detected anomalies with stored noise), detector, threshold and engines.
pub struct RecourseSetup<'a> {
    pub scm: &'a Scm,
    pub rule: &'a LabelRule,
    pub detector: &'a Detector,
    pub tau: f64,
    pub engine: Option<&'a GraphVae>,
    pub rows: &'a Split,
    pub actionable: &'a [usize],
    /// Normal-training statistics: policy input scaling and costs.
    pub mean: &'a [f64],
    pub std: &'a [f64],
    pub norm_basis: NormBasis,
}

/// A trained policy with its log and evaluation.
#[derive(Debug, Clone)]
pub struct RecourseRun {
    pub policy: ActionPolicy,
    pub log: Vec<EpochLog>,
    pub theta: Tensor,
    pub report: FlipReport,
}

impl<'a> RecourseSetup<'a> {
    pub fn cost(&self) -> Result<CostVector, RecourseError> {
        CostVector::new(self.std.to_vec(), self.actionable)
    }

    /// Counterfactual model selected by `config`.
    pub fn cf_model(&self, config: &RecourseConfig) -> Result<CfModel<'a>, RecourseError> {
        Ok(match (config.baseline, config.engine) {
            (Baseline::Naive, _) => CfModel::Naive,
            (Baseline::Adcar, EngineChoice::Exact) => CfModel::Exact { scm: self.scm, u: &self.rows.u },
            (Baseline::Adcar, EngineChoice::Learned) => {
                CfModel::Learned(self.engine.ok_or_else(|| RecourseError::Invalid("the learned engine is not available".into()))?)
            }
        })
    }

    pub fn train(&self, config: &RecourseConfig) -> Result<(ActionPolicy, Vec<EpochLog>), RecourseError> {
        let mut policy = ActionPolicy::new(self.mean, self.std, self.actionable, &config.hidden, crate::rng::sub_seed(config.seed, "policy"))?;
        let log = train_policy(&mut policy, &self.rows.x, self.detector, self.tau, self.cf_model(config)?, &self.cost()?, config)?;
        Ok((policy, log))
    }

    /// Ŷ on the model's own counterfactuals, Y on the true anomalies among the rows.
    pub fn report(&self, policy: &ActionPolicy, config: &RecourseConfig) -> Result<(Tensor, FlipReport), RecourseError> {
        let theta = policy.predict_action(&self.rows.x);
        let xcf = self.cf_model(config)?.counterfactual(&self.rows.x, &theta, self.actionable)?;
        let scores = self.detector.scores(&xcf)?;
        let det_flip = flip_ratio(&scores, self.tau)?;
        let truth: Vec<usize> = (0..self.rows.len()).filter(|&i| self.rows.labels[i] == 1).collect();
        let t = self.rows.select(&truth);
        let theta_t = theta.select(ndarray::Axis(0), &truth);
        let (gt_flip, gt_mask) = match truth.is_empty() {
            true => (f64::NAN, Vec::new()),
            false => ground_truth_flip(self.scm, &t.x, &t.u, &theta_t, self.rule)?,
        };
        let norm = match self.norm_basis {
            NormBasis::GroundTruth => action_norm_on_flipped(&theta_t, &self.cost()?, &gt_mask),
            NormBasis::Detector => {
                let mask: Vec<bool> = scores.iter().map(|&s| s <= self.tau).collect();
                action_norm_on_flipped(&theta, &self.cost()?, &mask)
            }
        };
        let report = FlipReport {
            n_detected: self.rows.len(),
            n_true: truth.len(),
            flip_ratio_detector: det_flip,
            flip_ratio_ground_truth: gt_flip,
            norm_mean: norm.map(|n| n.0),
            norm_std: norm.map(|n| n.1),
        };
        Ok((theta, report))
    }

    pub fn run(&self, config: &RecourseConfig) -> Result<RecourseRun, RecourseError> {
        let (policy, log) = self.train(config)?;
        let (theta, report) = self.report(&policy, config)?;
        Ok(RecourseRun { policy, log, theta, report })
    }
}

/// Mean ± std of each field over seeds. Norms average the seeds where they are defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub seeds: usize,
    pub detector_mean: f64,
    pub detector_std: f64,
    pub ground_truth_mean: f64,
    pub ground_truth_std: f64,
    pub norm_mean: Option<f64>,
    pub norm_std: Option<f64>,
}

pub fn aggregate(reports: &[FlipReport]) -> Option<Aggregate> {
    let (dm, ds) = mean_std(&reports.iter().map(|r| r.flip_ratio_detector).collect::<Vec<_>>())?;
    let (gm, gs) = mean_std(&reports.iter().map(|r| r.flip_ratio_ground_truth).collect::<Vec<_>>())?;
    let norms = mean_std(&reports.iter().filter_map(|r| r.norm_mean).collect::<Vec<_>>());
    Some(Aggregate {
        seeds: reports.len(),
        detector_mean: dm,
        detector_std: ds,
        ground_truth_mean: gm,
        ground_truth_std: gs,
        norm_mean: norms.map(|n| n.0),
        norm_std: norms.map(|n| n.1),
    })
}

/// Nine significant digits, shortest round-trip form.
pub fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    format!("{:.8e}", v).parse::<f64>().map(|r| r.to_string()).unwrap_or_else(|_| v.to_string())
}

pub(crate) fn opt9(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

/// Writes one FlipReport per line with a leading `label` column.
pub fn write_reports(path: &std::path::Path, rows: &[(String, FlipReport)]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "n_detected", "n_true", "flip_ratio_detector", "flip_ratio_ground_truth", "norm_mean", "norm_std"])?;
    for (label, r) in rows {
        w.write_record([
            label.clone(),
            r.n_detected.to_string(),
            r.n_true.to_string(),
            sig9(r.flip_ratio_detector),
            sig9(r.flip_ratio_ground_truth),
            opt9(r.norm_mean),
            opt9(r.norm_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}
