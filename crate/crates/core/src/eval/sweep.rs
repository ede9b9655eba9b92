use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{opt9, sig9, FlipReport, RecourseSetup};
use crate::detect::DetectorKind;
use crate::recourse::{RecourseConfig, RecourseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Lambda,
    Alpha,
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "alpha" => Ok(SweepParam::Alpha),
            _ => Err(format!("unknown sweep parameter {s} (lambda | alpha)")),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Alpha => "alpha",
        })
    }
}

/// Default grid: seven λ values (eight for the autoencoder) or α = 0.1, …, 0.9.
pub fn default_values(param: SweepParam, kind: DetectorKind) -> Vec<f64> {
    match param {
        SweepParam::Lambda => {
            let mut v = vec![1.0, 1e-1, 1e-2, 1e-3, 5e-4, 1e-4, 1e-5];
            if kind == DetectorKind::Ae {
                v.push(1e-6);
            }
            v
        }
        SweepParam::Alpha => (1..=9).map(|i| i as f64 / 10.0).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    /// Training or evaluation failure is kept as a message.
    pub result: Result<FlipReport, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub param: SweepParam,
    pub points: Vec<SweepPoint>,
}

impl SweepGrid {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// `(value, report)` for the points that succeeded.
    pub fn ok(&self) -> impl Iterator<Item = (f64, &FlipReport)> {
        self.points.iter().filter_map(|p| p.result.as_ref().ok().map(|r| (p.value, r)))
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["param", "value", "status", "n_detected", "n_true", "flip_ratio_detector", "flip_ratio_ground_truth", "norm_mean", "norm_std"])?;
        for p in &self.points {
            let mut rec = vec![self.param.to_string(), sig9(p.value)];
            match &p.result {
                Ok(r) => rec.extend([
                    "ok".to_string(),
                    r.n_detected.to_string(),
                    r.n_true.to_string(),
                    sig9(r.flip_ratio_detector),
                    sig9(r.flip_ratio_ground_truth),
                    opt9(r.norm_mean),
                    opt9(r.norm_std),
                ]),
                Err(e) => {
                    rec.push(format!("failed: {e}"));
                    rec.extend(std::iter::repeat_n(String::new(), 6));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Retrains the policy once per value with the same seed. Points run on separate threads.
pub fn run_sweep(setup: &RecourseSetup, param: SweepParam, values: &[f64], base: &RecourseConfig) -> Result<SweepGrid, RecourseError> {
    if values.is_empty() {
        return Err(RecourseError::Invalid("sweep needs at least one value".into()));
    }
    let points = std::thread::scope(|s| {
        let handles: Vec<_> = values
            .iter()
            .map(|&value| {
                let mut cfg = base.clone();
                match param {
                    SweepParam::Lambda => cfg.lambda = value,
                    SweepParam::Alpha => cfg.alpha = value,
                }
                s.spawn(move || setup.run(&cfg).map(|r| r.report).map_err(|e| e.to_string()))
            })
            .collect();
        values
            .iter()
            .zip(handles)
            .map(|(&value, h)| SweepPoint { value, result: h.join().unwrap_or_else(|_| Err("worker panicked".into())) })
            .collect()
    });
    Ok(SweepGrid { param, points })
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` for fewer
/// than two points or a constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}
