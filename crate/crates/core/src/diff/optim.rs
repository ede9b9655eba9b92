use super::ParamStore;

pub trait Optimizer {
    /// Applies one update from the accumulated gradients, then zeroes them.
    fn step(&mut self, params: &mut ParamStore);
}

/// Plain gradient descent `p ← p − η·g`, optionally with global-norm clipping.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub clip_norm: Option<f64>,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Self { lr, clip_norm: None }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut ParamStore) {
        let mut scale = self.lr;
        if let Some(max) = self.clip_norm {
            let n = params.grad_norm();
            if n > max {
                scale *= max / n;
            }
        }
        for p in params.iter_mut() {
            if p.trainable {
                p.value.scaled_add(-scale, &p.grad);
            }
            p.zero_grad();
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<super::Tensor>,
    v: Vec<super::Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut ParamStore) {
        if self.m.is_empty() {
            for i in 0..params.len() {
                let d = params.get(i).value.dim();
                self.m.push(super::Tensor::zeros(d));
                self.v.push(super::Tensor::zeros(d));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let step = self.lr * bc2.sqrt() / bc1;
        for (i, p) in params.iter_mut().enumerate() {
            if p.trainable {
                let m = &mut self.m[i];
                let v = &mut self.v[i];
                ndarray::Zip::from(&mut p.value).and(m).and(v).and(&p.grad).for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= step * *m / (v.sqrt() + eps);
                });
            }
            p.zero_grad();
        }
    }
}
