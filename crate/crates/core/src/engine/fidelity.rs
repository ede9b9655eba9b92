use rand_distr::{Distribution, Normal};

use super::EngineError;
use crate::diff::Tensor;
use crate::rng::Rng;
use crate::scm::{ExogenousRecord, Scm};

/// Squared-error statistics between predicted and exact counterfactuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fidelity {
    /// Mean over pairs of the squared Euclidean distance (raw units).
    pub mse: f64,
    /// Standard deviation of the per-pair squared errors.
    pub sse: f64,
    pub n: usize,
}

/// Actions `θ_j ~ N(0, (scale·std_j)²)` on actionable columns, zero elsewhere.
pub fn sample_thetas(n: usize, std: &[f64], actionable: &[usize], scale: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros((n, std.len()));
    for mut r in t.rows_mut() {
        for &j in actionable {
            r[j] = Normal::new(0.0, scale * std[j]).expect("finite std").sample(rng);
        }
    }
    t
}

/// Compares `predict(x, theta)` against stored-noise counterfactuals of `scm`.
pub fn cf_fidelity(
    scm: &Scm,
    x: &Tensor,
    u: &Tensor,
    theta: &Tensor,
    predict: impl Fn(&Tensor, &Tensor) -> Result<Tensor, EngineError>,
) -> Result<Fidelity, EngineError> {
    if x.nrows() == 0 {
        return Err(EngineError::Invalid("empty test set".into()));
    }
    let pred = predict(x, theta)?;
    let mut errs = Vec::with_capacity(x.nrows());
    for i in 0..x.nrows() {
        let exact = scm
            .counterfactual_exact(&x.row(i).to_vec(), &ExogenousRecord(u.row(i).to_vec()), &theta.row(i).to_vec())
            .map_err(|e| EngineError::Invalid(format!("row {i}: {e}")))?;
        errs.push(exact.iter().zip(pred.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
    }
    let n = errs.len() as f64;
    let mse = errs.iter().sum::<f64>() / n;
    let sse = (errs.iter().map(|e| (e - mse) * (e - mse)).sum::<f64>() / n).sqrt();
    Ok(Fidelity { mse, sse, n: errs.len() })
}
