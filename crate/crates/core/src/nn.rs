//! Dense feed-forward networks on top of the tape.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diff::{ParamStore, Tensor, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<'t>(self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
            Activation::Identity => x,
        }
    }

    fn apply_values(self, x: &mut Tensor) {
        match self {
            Activation::Tanh => x.mapv_inplace(f64::tanh),
            Activation::Relu => x.mapv_inplace(|v| v.max(0.0)),
            Activation::Identity => {}
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    w: usize,
    b: Option<usize>,
    act: Activation,
}

/// Glorot-uniform initialised weight matrix.
pub fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit))
}

/// Multi-layer perceptron. Hidden layers share one activation; the last layer
/// has its own.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
    pub params: ParamStore,
}

impl Mlp {
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, bias: bool, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            let w = params.add(format!("l{i}.w"), glorot(rng, pair[0], pair[1]));
            let b = bias.then(|| params.add(format!("l{i}.b"), Tensor::zeros((1, pair[1]))));
            let act = if i + 2 == sizes.len() { output } else { hidden };
            layers.push(Layer { w, b, act });
        }
        Self { sizes: sizes.to_vec(), layers, params }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Sets the final layer's weights and bias to zero.
    pub fn zero_last_layer(&mut self) {
        let last = self.layers.last().unwrap().clone();
        self.params.get_mut(last.w).value.fill(0.0);
        if let Some(b) = last.b {
            self.params.get_mut(b).value.fill(0.0);
        }
    }

    /// Forward pass with parameters previously bound via `self.params.bind*`.
    pub fn forward<'t>(&self, bound: &[Var<'t>], x: Var<'t>) -> Var<'t> {
        self.layers.iter().fold(x, |h, l| {
            let z = match l.b {
                Some(b) => h.affine(bound[l.w], bound[b]),
                None => h.matmul(bound[l.w]),
            };
            l.act.apply(z)
        })
    }

    /// Tape-free forward pass.
    pub fn forward_values(&self, x: &Tensor) -> Tensor {
        self.layers.iter().fold(x.clone(), |h, l| {
            let mut z = h.dot(&self.params.get(l.w).value);
            if let Some(b) = l.b {
                z += &self.params.get(b).value;
            }
            l.act.apply_values(&mut z);
            z
        })
    }
}

/// Shuffled mini-batches of row indices covering `0..n`.
pub fn minibatches(n: usize, batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

/// `(x − mean) / std` applied row-wise.
pub fn standardize(x: &Tensor, mean: &[f64], std: &[f64]) -> Tensor {
    let mut z = x.clone();
    for mut row in z.rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(mean).zip(std) {
            *v = (*v + -m) * (1.0 / s);
        }
    }
    z
}

/// Tape version of [`standardize`].
pub fn standardize_var<'t>(x: Var<'t>, mean: &[f64], std: &[f64]) -> Var<'t> {
    let tape = x.tape();
    let neg_mean = tape.constant(crate::diff::row(&mean.iter().map(|m| -m).collect::<Vec<_>>()));
    let inv_std = tape.constant(crate::diff::row(&std.iter().map(|s| 1.0 / s).collect::<Vec<_>>()));
    x.add_row(neg_mean).mul_row(inv_std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tape;
    use rand::SeedableRng;

    #[test]
    fn tape_and_value_paths_agree() {
        let mut rng = Rng::seed_from_u64(1);
        let mlp = Mlp::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, true, &mut rng);
        let x = Tensor::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let tape = Tape::new();
        let bound = mlp.params.bind_frozen(&tape);
        let y = mlp.forward(&bound, tape.constant(x.clone()));
        let direct = mlp.forward_values(&x);
        assert_eq!(*y.value(), direct);
    }

    #[test]
    fn zeroed_last_layer_outputs_zero() {
        let mut rng = Rng::seed_from_u64(2);
        let mut mlp = Mlp::new(&[3, 8, 2], Activation::Tanh, Activation::Identity, true, &mut rng);
        mlp.zero_last_layer();
        let y = mlp.forward_values(&Tensor::from_elem((2, 3), 0.7));
        assert!(y.iter().all(|&v| v == 0.0));
    }
}
