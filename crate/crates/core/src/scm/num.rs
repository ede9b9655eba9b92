//! Numeric abstraction so one mechanism definition serves both plain `f64`
//! simulation and batched, differentiable evaluation on a tape.

use crate::diff::{sigmoid, Tensor, Var};

pub trait Num: Clone {
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn scale(&self, c: f64) -> Self;
    fn shift(&self, c: f64) -> Self;
    fn exp(&self) -> Self;
    fn sigmoid(&self) -> Self;
    fn tanh(&self) -> Self;
    fn abs(&self) -> Self;
    fn relu(&self) -> Self;
    fn recip(&self) -> Self;
    fn square(&self) -> Self;
    fn clamp_min(&self, c: f64) -> Self;
    /// Forward values, one per batch row.
    fn values(&self) -> Vec<f64>;
    /// Constant (gradient-free) with the same batch layout as `self`.
    fn lift(&self, v: Vec<f64>) -> Self;

    fn konst(&self, c: f64) -> Self {
        let n = self.values().len();
        self.lift(vec![c; n])
    }

    /// Piecewise-constant map; carries no gradient.
    fn map_const(&self, f: impl Fn(f64) -> f64) -> Self {
        self.lift(self.values().into_iter().map(f).collect())
    }

    /// `1{pred(x)}` as a constant.
    fn ind(&self, pred: impl Fn(f64) -> bool) -> Self {
        self.map_const(|x| if pred(x) { 1.0 } else { 0.0 })
    }

    fn clamp_max(&self, c: f64) -> Self {
        self.scale(-1.0).clamp_min(-c).scale(-1.0)
    }
}

/// Row-wise piecewise-constant function of several inputs.
pub fn lift_rows<T: Num>(like: &T, inputs: &[&T], f: impl Fn(&[f64]) -> f64) -> T {
    let cols: Vec<Vec<f64>> = inputs.iter().map(|t| t.values()).collect();
    let n = like.values().len();
    let mut buf = vec![0.0; inputs.len()];
    let out = (0..n)
        .map(|r| {
            for (b, c) in buf.iter_mut().zip(&cols) {
                *b = c[r];
            }
            f(&buf)
        })
        .collect();
    like.lift(out)
}

impl Num for f64 {
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    fn shift(&self, c: f64) -> Self {
        self + c
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn sigmoid(&self) -> Self {
        sigmoid(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn relu(&self) -> Self {
        self.max(0.0)
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn square(&self) -> Self {
        self * self
    }
    fn clamp_min(&self, c: f64) -> Self {
        self.max(c)
    }
    fn values(&self) -> Vec<f64> {
        vec![*self]
    }
    fn lift(&self, v: Vec<f64>) -> Self {
        v[0]
    }
    fn konst(&self, c: f64) -> Self {
        c
    }
    fn map_const(&self, f: impl Fn(f64) -> f64) -> Self {
        f(*self)
    }
}

/// Tape variables are evaluated as `n×1` columns.
impl<'t> Num for Var<'t> {
    fn add(&self, o: &Self) -> Self {
        *self + *o
    }
    fn sub(&self, o: &Self) -> Self {
        *self - *o
    }
    fn mul(&self, o: &Self) -> Self {
        *self * *o
    }
    fn scale(&self, c: f64) -> Self {
        Var::scale(*self, c)
    }
    fn shift(&self, c: f64) -> Self {
        Var::shift(*self, c)
    }
    fn exp(&self) -> Self {
        Var::exp(*self)
    }
    fn sigmoid(&self) -> Self {
        Var::sigmoid(*self)
    }
    fn tanh(&self) -> Self {
        Var::tanh(*self)
    }
    fn abs(&self) -> Self {
        Var::abs(*self)
    }
    fn relu(&self) -> Self {
        Var::relu(*self)
    }
    fn recip(&self) -> Self {
        Var::recip(*self)
    }
    fn square(&self) -> Self {
        Var::square(*self)
    }
    fn clamp_min(&self, c: f64) -> Self {
        Var::clamp_min(*self, c)
    }
    fn values(&self) -> Vec<f64> {
        self.value().iter().copied().collect()
    }
    fn lift(&self, v: Vec<f64>) -> Self {
        let n = v.len();
        self.tape().constant(Tensor::from_shape_vec((n, 1), v).expect("column"))
    }
}
