use super::{DiffError, Tape, Tensor, Var};

/// Compares tape gradients of a scalar function with central differences.
///
/// Returns `max_k |analytic_k − numeric_k| / max(1, |analytic_k|)`.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64, DiffError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    if !(eps > 0.0) {
        return Err(DiffError::BadEpsilon(eps));
    }
    let eval = |p: &Tensor| -> Result<f64, DiffError> {
        let tape = Tape::new();
        let x = tape.constant(p.clone());
        let y = f(&tape, x);
        let shape = y.shape();
        if shape != (1, 1) {
            return Err(DiffError::NotScalar { shape });
        }
        let v = y.item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DiffError::NonFinite)
        }
    };

    let tape = Tape::new();
    let x = tape.var(point.clone());
    let y = f(&tape, x);
    if !y.value().iter().all(|v| v.is_finite()) {
        return Err(DiffError::NonFinite);
    }
    let grads = tape.backward(y)?;
    let analytic = grads.get_or_zeros(x);

    let mut worst: f64 = 0.0;
    let mut probe = point.clone();
    for idx in 0..point.len() {
        let (r, c) = (idx / point.ncols(), idx % point.ncols());
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + eps;
        let up = eval(&probe)?;
        probe[[r, c]] = orig - eps;
        let down = eval(&probe)?;
        probe[[r, c]] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[[r, c]];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
