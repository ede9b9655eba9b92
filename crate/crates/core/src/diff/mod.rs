//! Reverse-mode automatic differentiation used by every trained model.

mod gradcheck;
mod optim;
mod param;
mod tape;

pub use gradcheck::grad_check;
pub use optim::{Adam, Optimizer, Sgd};
pub use param::{ParamStore, Parameter, StoredTensor};
pub use tape::{Gradients, Primitive, Tape, Var};

pub(crate) use tape::sigmoid;

use thiserror::Error;

/// Row-major 2-D array of `f64`. Vectors are `1×n` rows or `n×1` columns,
/// scalars are `1×1`.
pub type Tensor = ndarray::Array2<f64>;

/// Builds a tensor, rejecting a value count that does not match the shape.
pub fn tensor(rows: usize, cols: usize, values: Vec<f64>) -> Result<Tensor, DiffError> {
    let n = values.len();
    Tensor::from_shape_vec((rows, cols), values).map_err(|_| DiffError::BadLength { rows, cols, len: n })
}

/// `1×n` row tensor.
pub fn row(values: &[f64]) -> Tensor {
    Tensor::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: incompatible input shapes {shapes:?}")]
    ShapeMismatch { op: &'static str, shapes: Vec<(usize, usize)> },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("shape {rows}x{cols} does not hold {len} values")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite function value during gradient check")]
    NonFinite,
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
}

#[cfg(test)]
mod tests;
