use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Gradients, Tape, Tensor, Var};

/// A tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.dim());
        Self { value, grad, trainable: true }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Ordered, named collection of parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<Parameter>,
}

/// Flat row-major tensor as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and returns its index.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.params.push(Parameter::new(value));
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Parameter {
        &mut self.params[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter on `tape`; trainable ones as differentiable leaves.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params
            .iter()
            .map(|p| if p.trainable { tape.var(p.value.clone()) } else { tape.constant(p.value.clone()) })
            .collect()
    }

    /// Records every parameter as a constant (inference, or gradients w.r.t. inputs only).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    /// Adds the gradients of `bound` (from [`ParamStore::bind`]) into the accumulators.
    pub fn accumulate(&mut self, grads: &Gradients, bound: &[Var<'_>]) {
        for (p, v) in self.params.iter_mut().zip(bound) {
            if p.trainable {
                if let Some(g) = grads.get(*v) {
                    p.grad += g;
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().map(|p| p.grad.iter().map(|g| g * g).sum::<f64>()).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }

    pub fn to_stored(&self) -> BTreeMap<String, StoredTensor> {
        self.names
            .iter()
            .zip(&self.params)
            .map(|(n, p)| {
                let (r, c) = p.value.dim();
                (n.clone(), StoredTensor { shape: [r, c], values: p.value.iter().copied().collect() })
            })
            .collect()
    }

    /// Overwrites values from stored tensors; every name and shape must match.
    pub fn load_stored(&mut self, stored: &BTreeMap<String, StoredTensor>) -> Result<(), String> {
        if stored.len() != self.params.len() {
            return Err(format!("expected {} tensors, found {}", self.params.len(), stored.len()));
        }
        for (name, p) in self.names.iter().zip(self.params.iter_mut()) {
            let s = stored.get(name).ok_or_else(|| format!("missing tensor {name}"))?;
            if s.shape != [p.value.nrows(), p.value.ncols()] {
                return Err(format!("tensor {name}: shape {:?} != {:?}", s.shape, p.value.dim()));
            }
            p.value = Tensor::from_shape_vec(p.value.dim(), s.values.clone())
                .map_err(|_| format!("tensor {name}: wrong value count"))?;
        }
        Ok(())
    }
}
