//! Score-based anomaly detectors: autoencoder reconstruction error and Deep SVDD.

mod metrics;

pub use metrics::{auprc, auroc, calibrate_threshold, detect, detection_metrics, f1_at, DetectionMetrics};

use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::diff::{row, Adam, Optimizer, Tape, Tensor, Var};
use crate::nn::{minibatches, standardize, standardize_var, Activation, Mlp};
use crate::rng::{self, Rng};

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("{0}")]
    Invalid(String),
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("hypersphere center collapsed (norm {norm:.3e}) after {attempts} initialisations")]
    Collapsed { norm: f64, attempts: usize },
    #[error("detector is untrained")]
    Untrained,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Ae,
    Svdd,
}

impl DetectorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ae" => Some(DetectorKind::Ae),
            "svdd" | "deepsvdd" => Some(DetectorKind::Svdd),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Ae => "ae",
            DetectorKind::Svdd => "svdd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    /// Layer widths after the input, e.g. `[16, 4, 16]` for the AE or `[32, 8]` for SVDD.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl DetectorConfig {
    pub fn ae(seed: u64) -> Self {
        Self { kind: DetectorKind::Ae, hidden: vec![16, 4, 16], epochs: 60, batch_size: 128, lr: 3e-3, seed }
    }

    pub fn svdd(seed: u64) -> Self {
        Self { kind: DetectorKind::Svdd, hidden: vec![32, 8], epochs: 30, batch_size: 128, lr: 1e-3, seed }
    }

    pub fn for_kind(kind: DetectorKind, seed: u64) -> Self {
        match kind {
            DetectorKind::Ae => Self::ae(seed),
            DetectorKind::Svdd => Self::svdd(seed),
        }
    }
}

/// Loss per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorReport {
    pub epoch_loss: Vec<f64>,
    pub init_attempts: usize,
}

/// Trained detector; scores live in standardized feature space.
#[derive(Debug, Clone)]
pub struct Detector {
    pub config: DetectorConfig,
    net: Mlp,
    /// Hypersphere center (SVDD only).
    center: Vec<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
    trained: bool,
}

const MAX_INIT_ATTEMPTS: usize = 5;
const MIN_CENTER_NORM: f64 = 0.01;

impl Detector {
    /// Untrained detector with freshly initialised weights.
    pub fn init(config: &DetectorConfig, mean: &[f64], std: &[f64], rng: &mut Rng) -> Self {
        let d = mean.len();
        let mut sizes = vec![d];
        sizes.extend(&config.hidden);
        let net = match config.kind {
            DetectorKind::Ae => {
                sizes.push(d);
                Mlp::new(&sizes, Activation::Tanh, Activation::Identity, true, rng)
            }
            DetectorKind::Svdd => Mlp::new(&sizes, Activation::Tanh, Activation::Tanh, false, rng),
        };
        Self { config: config.clone(), net, center: vec![], mean: mean.to_vec(), std: std.to_vec(), trained: false }
    }

    pub fn kind(&self) -> DetectorKind {
        self.config.kind
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn standardization(&self) -> (&[f64], &[f64]) {
        (&self.mean, &self.std)
    }

    /// Per-row residual in standardized space (before the norm).
    fn residual_values(&self, z: &Tensor) -> Tensor {
        let out = self.net.forward_values(z);
        match self.config.kind {
            DetectorKind::Ae => z - &out,
            DetectorKind::Svdd => out - &row(&self.center),
        }
    }

    fn residual_var<'t>(&self, bound: &[Var<'t>], z: Var<'t>) -> Var<'t> {
        let out = self.net.forward(bound, z);
        match self.config.kind {
            DetectorKind::Ae => z - out,
            DetectorKind::Svdd => out.add_row(z.tape().constant(row(&self.center.iter().map(|c| -c).collect::<Vec<_>>()))),
        }
    }

    fn check(&self) -> Result<(), DetectError> {
        if self.trained {
            Ok(())
        } else {
            Err(DetectError::Untrained)
        }
    }

    /// Anomaly scores `g(x)` of raw rows.
    pub fn scores(&self, x: &Tensor) -> Result<Vec<f64>, DetectError> {
        self.check()?;
        if x.ncols() != self.dim() {
            return Err(DetectError::Invalid(format!("expected {} features, got {}", self.dim(), x.ncols())));
        }
        let r = self.residual_values(&standardize(x, &self.mean, &self.std));
        Ok(r.rows().into_iter().map(|row| row.dot(&row).sqrt()).collect())
    }

    pub fn score(&self, x: &[f64]) -> Result<f64, DetectError> {
        Ok(self.scores(&row(x))?[0])
    }

    /// Differentiable scores (`n×1`) of raw rows on the tape of `x`; weights are constants.
    pub fn score_var<'t>(&self, x: Var<'t>) -> Var<'t> {
        let bound = self.net.params.bind_frozen(x.tape());
        self.residual_var(&bound, standardize_var(x, &self.mean, &self.std)).row_l2norm()
    }

    /// Trains on normal rows. SVDD fixes its center as the mean initial
    /// embedding and re-initialises when that center is near the origin.
    pub fn train(x: &Tensor, mean: &[f64], std: &[f64], config: &DetectorConfig) -> Result<(Self, DetectorReport), DetectError> {
        if x.nrows() < 100 {
            return Err(DetectError::Invalid(format!("need at least 100 training rows, got {}", x.nrows())));
        }
        if x.ncols() != mean.len() || mean.len() != std.len() {
            return Err(DetectError::Invalid("standardization stats do not match the data".into()));
        }
        if config.epochs == 0 || config.batch_size == 0 || !(config.lr > 0.0) {
            return Err(DetectError::Invalid(format!("bad training settings {config:?}")));
        }
        let z = standardize(x, mean, std);
        let mut report = DetectorReport::default();
        let mut det = None;
        let mut last_norm = 0.0;
        for attempt in 0..MAX_INIT_ATTEMPTS {
            report.init_attempts = attempt + 1;
            let mut init_rng = Rng::seed_from_u64(rng::mix(rng::sub_seed(config.seed, "detector-init"), attempt as u64));
            let mut d = Self::init(config, mean, std, &mut init_rng);
            if config.kind == DetectorKind::Ae {
                det = Some(d);
                break;
            }
            let emb = d.net.forward_values(&z);
            let center: Vec<f64> = emb.mean_axis(ndarray::Axis(0)).expect("rows").to_vec();
            last_norm = center.iter().map(|c| c * c).sum::<f64>().sqrt();
            if last_norm > MIN_CENTER_NORM {
                d.center = center;
                det = Some(d);
                break;
            }
        }
        let mut det = det.ok_or(DetectError::Collapsed { norm: last_norm, attempts: MAX_INIT_ATTEMPTS })?;
        let mut opt = Adam::new(config.lr);
        let mut rng = rng::stream(config.seed, "detector-batches");
        for epoch in 0..config.epochs {
            let mut total = 0.0;
            for (b, idx) in minibatches(z.nrows(), config.batch_size, &mut rng).into_iter().enumerate() {
                let tape = Tape::new();
                let bound = det.net.params.bind(&tape);
                let zb = tape.constant(z.select(ndarray::Axis(0), &idx));
                let loss = match config.kind {
                    DetectorKind::Ae => det.residual_var(&bound, zb).square().mean(),
                    DetectorKind::Svdd => det.residual_var(&bound, zb).square().row_sum().mean(),
                };
                let l = loss.item();
                if !l.is_finite() {
                    return Err(DetectError::Diverged { epoch, batch: b });
                }
                total += l * idx.len() as f64;
                let grads = tape.backward(loss).expect("scalar loss");
                det.net.params.accumulate(&grads, &bound);
                opt.step(&mut det.net.params);
            }
            report.epoch_loss.push(total / z.nrows() as f64);
        }
        det.trained = true;
        Ok((det, report))
    }

    pub fn to_checkpoint(&self, tau: Option<(f64, f64)>) -> Checkpoint {
        let mut ck = Checkpoint::new("detector", &self.config);
        ck.insert_params("net", &self.net.params);
        ck.insert_row("mean", &self.mean);
        ck.insert_row("std", &self.std);
        if self.config.kind == DetectorKind::Svdd {
            ck.insert_row("center", &self.center);
        }
        if let Some((tau, level)) = tau {
            ck.insert_row("threshold", &[tau, level]);
        }
        ck
    }

    /// Restores a detector and its calibrated `(tau, level)` if stored.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, Option<(f64, f64)>), DetectError> {
        let config: DetectorConfig = ck.config()?;
        let mean = ck.row("mean")?;
        let std = ck.row("std")?;
        let mut det = Self::init(&config, &mean, &std, &mut Rng::seed_from_u64(0));
        ck.load_params("net", &mut det.net.params)?;
        if config.kind == DetectorKind::Svdd {
            det.center = ck.row("center")?;
        }
        det.trained = true;
        let tau = match ck.tensors.contains_key("threshold") {
            true => {
                let t = ck.row("threshold")?;
                Some((t[0], t[1]))
            }
            false => None,
        };
        Ok((det, tau))
    }

    pub fn save(&self, path: &Path, tau: Option<(f64, f64)>) -> Result<(), DetectError> {
        Ok(self.to_checkpoint(tau).save(path)?)
    }

    pub fn load(path: &Path) -> Result<(Self, Option<(f64, f64)>), DetectError> {
        Self::from_checkpoint(&Checkpoint::load(path, "detector")?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::column_stats;
    use rand_distr::{Distribution, Normal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Tensor {
        let mut r = Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 1.0).unwrap();
        Tensor::from_shape_fn((n, d), |_| nd.sample(&mut r))
    }

    #[test]
    fn constant_rows_reconstruct_to_zero() {
        let x = Tensor::from_elem((200, 3), 2.5);
        let (mean, std) = column_stats(&x);
        let (det, _) = Detector::train(&x, &mean, &std, &DetectorConfig::ae(1)).unwrap();
        assert!(det.scores(&x).unwrap().iter().all(|&s| s < 1e-3));
    }

    #[test]
    fn svdd_center_fixed_and_probes_score_higher() {
        let x = gaussian(500, 4, 2);
        let (mean, std) = column_stats(&x);
        let cfg = DetectorConfig { epochs: 1, ..DetectorConfig::svdd(3) };
        let (one, _) = Detector::train(&x, &mean, &std, &cfg).unwrap();
        let cfg = DetectorConfig { epochs: 20, ..DetectorConfig::svdd(3) };
        let (det, report) = Detector::train(&x, &mean, &std, &cfg).unwrap();
        assert_eq!(one.center(), det.center());
        assert!(report.epoch_loss.last() < report.epoch_loss.first());
        let mut r = Rng::seed_from_u64(9);
        let probes = Tensor::from_shape_fn((500, 4), |_| rand::Rng::random_range(&mut r, -6.0..6.0));
        let avg = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        assert!(avg(det.scores(&x).unwrap()) < avg(det.scores(&probes).unwrap()));
    }

    #[test]
    fn same_seed_same_weights() {
        let x = gaussian(150, 3, 4);
        let (mean, std) = column_stats(&x);
        let cfg = DetectorConfig { epochs: 3, ..DetectorConfig::ae(5) };
        let (a, _) = Detector::train(&x, &mean, &std, &cfg).unwrap();
        let (b, _) = Detector::train(&x, &mean, &std, &cfg).unwrap();
        assert_eq!(a.scores(&x).unwrap(), b.scores(&x).unwrap());
    }

    #[test]
    fn untrained_and_small_inputs_rejected() {
        let mut r = Rng::seed_from_u64(0);
        let det = Detector::init(&DetectorConfig::ae(0), &[0.0; 2], &[1.0; 2], &mut r);
        assert!(matches!(det.score(&[0.0, 0.0]), Err(DetectError::Untrained)));
        let x = gaussian(50, 2, 1);
        assert!(Detector::train(&x, &[0.0; 2], &[1.0; 2], &DetectorConfig::ae(0)).is_err());
    }

    #[test]
    fn tape_scores_match_values_and_checkpoint_round_trips() {
        let x = gaussian(200, 3, 6);
        let (mean, std) = column_stats(&x);
        for cfg in [DetectorConfig { epochs: 2, ..DetectorConfig::ae(1) }, DetectorConfig { epochs: 2, ..DetectorConfig::svdd(1) }] {
            let (det, _) = Detector::train(&x, &mean, &std, &cfg).unwrap();
            let tape = Tape::new();
            let s = det.score_var(tape.constant(x.clone()));
            let direct = det.scores(&x).unwrap();
            for (a, b) in s.value().iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12);
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("det.json");
            det.save(&path, Some((1.5, 0.995))).unwrap();
            let (back, tau) = Detector::load(&path).unwrap();
            assert_eq!(tau, Some((1.5, 0.995)));
            assert_eq!(back.scores(&x).unwrap(), direct);
        }
    }
}
