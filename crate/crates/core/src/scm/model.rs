use std::collections::BTreeSet;

use crate::diff::{Tensor, Var};
use crate::rng;

use super::mechanism::{Builtin, Mechanism};
use super::num::Num;
use super::{CausalGraph, ScmError};

/// Exogenous draws for one row, aligned to node order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousRecord(pub Vec<f64>);

/// A single intervention on one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intervention {
    /// `do(X_node = value)`
    Hard { node: usize, value: f64 },
    /// Adds `delta` after mechanism and noise.
    Shift { node: usize, delta: f64 },
}

impl Intervention {
    pub fn node(&self) -> usize {
        match *self {
            Intervention::Hard { node, .. } | Intervention::Shift { node, .. } => node,
        }
    }
}

/// Rows drawn from an SCM together with their noise.
#[derive(Debug, Clone)]
pub struct Sample {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// Draws discarded because a mechanism returned a non-finite value.
    pub rejected: usize,
}

/// Structural causal model: a DAG plus one mechanism per node.
#[derive(Debug, Clone)]
pub struct Scm {
    graph: CausalGraph,
    mechanisms: Vec<Mechanism>,
}

/// Maximum redraws of a single row before sampling gives up.
const MAX_REDRAWS: usize = 1000;

impl Scm {
    pub fn new(graph: CausalGraph, mut mechanisms: Vec<Mechanism>) -> Result<Self, ScmError> {
        if mechanisms.len() != graph.len() {
            return Err(ScmError::Invalid(format!(
                "{} mechanisms for {} nodes",
                mechanisms.len(),
                graph.len()
            )));
        }
        mechanisms.sort_by_key(|m| m.node);
        for (i, m) in mechanisms.iter().enumerate() {
            if m.node != i {
                return Err(ScmError::Invalid(format!("node {} has no mechanism", graph.names()[i])));
            }
            let want: BTreeSet<usize> = graph.parents(i).into_iter().collect();
            let have: BTreeSet<usize> = m.parents.iter().copied().collect();
            if want != have {
                let nm = |s: &BTreeSet<usize>| s.iter().map(|&p| graph.names()[p].clone()).collect::<Vec<_>>();
                return Err(ScmError::Invalid(format!(
                    "mechanism of {} reads {:?} but graph parents are {:?}",
                    graph.names()[i],
                    nm(&have),
                    nm(&want)
                )));
            }
            m.noise.validate()?;
        }
        Ok(Self { graph, mechanisms })
    }

    /// Assembles a model from built-in mechanisms listed in node order.
    pub fn from_builtins(names: &[&str], builtins: &[Builtin]) -> Result<Self, ScmError> {
        let mechanisms: Vec<Mechanism> = builtins.iter().map(|&b| Mechanism::builtin(b)).collect();
        let edges: Vec<(usize, usize)> =
            mechanisms.iter().flat_map(|m| m.parents.iter().map(move |&p| (p, m.node))).collect();
        let graph = CausalGraph::new(names.iter().map(|s| s.to_string()).collect(), &edges)?;
        Self::new(graph, mechanisms)
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn dim(&self) -> usize {
        self.graph.len()
    }

    pub fn is_additive(&self) -> bool {
        self.mechanisms.iter().all(|m| m.additive)
    }

    /// Evaluates every mechanism in topological order, adding `shift[i]` to node `i`.
    pub fn simulate_generic<T: Num>(&self, u: &[T], shift: Option<&[T]>) -> Vec<T> {
        let mut x: Vec<T> = u.iter().map(|ui| ui.konst(0.0)).collect();
        for &i in self.graph.topo_order() {
            let mut v = self.mechanisms[i].eval(&x, u);
            if let Some(s) = shift {
                v = v.add(&s[i]);
            }
            x[i] = v;
        }
        x
    }

    pub fn simulate(&self, u: &[f64]) -> Vec<f64> {
        self.simulate_generic(u, None)
    }

    /// Draws one exogenous record per row from per-row streams of `seed`.
    pub fn draw_noise(&self, rng: &mut rng::Rng) -> Vec<f64> {
        self.mechanisms.iter().map(|m| m.noise.sample(rng)).collect()
    }

    /// Generates row `index` of the stream identified by `seed`. Rows whose
    /// simulation is non-finite are redrawn from the same row stream.
    pub fn sample_row(&self, seed: u64, index: u64) -> Result<(Vec<f64>, Vec<f64>, usize), ScmError> {
        let mut r = rng::row_stream(seed, index);
        for redraws in 0..MAX_REDRAWS {
            let u = self.draw_noise(&mut r);
            let x = self.simulate(&u);
            if x.iter().all(|v| v.is_finite()) {
                return Ok((x, u, redraws));
            }
        }
        Err(ScmError::NonFinite(format!("row {index} non-finite after {MAX_REDRAWS} redraws")))
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample, ScmError> {
        if n == 0 {
            return Err(ScmError::Invalid("sample size must be at least 1".into()));
        }
        let mut out = Sample { x: Vec::with_capacity(n), u: Vec::with_capacity(n), rejected: 0 };
        for i in 0..n {
            let (x, u, redraws) = self.sample_row(seed, i as u64)?;
            out.x.push(x);
            out.u.push(u);
            out.rejected += redraws;
        }
        Ok(out)
    }

    /// Residual abduction `u_i = x_i − f_i(x_pa, 0)`; additive models only.
    pub fn abduct_residual(&self, x: &[f64]) -> Result<ExogenousRecord, ScmError> {
        if let Some(m) = self.mechanisms.iter().find(|m| !m.additive) {
            return Err(ScmError::NotAdditive(self.graph.names()[m.node].clone()));
        }
        self.check_len(x)?;
        let u = vec![0.0; self.dim()];
        Ok(ExogenousRecord(self.mechanisms.iter().map(|m| x[m.node] - m.structural(x, &u)).collect()))
    }

    /// Abduction that also uses closed-form inverses of non-additive mechanisms.
    pub fn abduct(&self, x: &[f64]) -> Result<ExogenousRecord, ScmError> {
        self.check_len(x)?;
        let mut u = vec![0.0; self.dim()];
        for &i in self.graph.topo_order() {
            let m = &self.mechanisms[i];
            u[i] = m
                .invert(x, &u, x[i])
                .ok_or_else(|| ScmError::NotAdditive(self.graph.names()[i].clone()))?;
        }
        Ok(ExogenousRecord(u))
    }

    fn check_len(&self, x: &[f64]) -> Result<(), ScmError> {
        if x.len() != self.dim() {
            return Err(ScmError::Invalid(format!("expected {} features, got {}", self.dim(), x.len())));
        }
        Ok(())
    }

    /// Per-node `|x_i − f_i(x_pa, u)|` for a factual row and its noise.
    pub fn residuals(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let sim = self.simulate(u);
        sim.iter().zip(x).map(|(s, x)| (s - x).abs()).collect()
    }

    /// Counterfactual under additive shifts `theta`, replaying stored noise:
    /// `x_i(θ) = f_i(x_pa(θ), u) + θ_i` in topological order. Nodes that are
    /// neither shifted nor downstream of a shift keep their factual value.
    pub fn counterfactual_exact(&self, x: &[f64], u: &ExogenousRecord, theta: &[f64]) -> Result<Vec<f64>, ScmError> {
        self.check_len(x)?;
        self.check_len(&u.0)?;
        self.check_len(theta)?;
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(ScmError::Invalid("non-finite action".into()));
        }
        let res = self.residuals(x, &u.0);
        if res.iter().any(|r| !(*r <= 1e-9)) {
            let report = self
                .graph
                .names()
                .iter()
                .zip(&res)
                .map(|(n, r)| format!("{n}: {r:.3e}"))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(ScmError::Inconsistent(report));
        }
        let affected = self.affected(theta.iter().enumerate().filter(|(_, t)| **t != 0.0).map(|(i, _)| i));
        let mut out = x.to_vec();
        for &i in self.graph.topo_order() {
            if affected.contains(&i) {
                out[i] = self.mechanisms[i].eval(&out, &u.0) + theta[i];
            }
        }
        Ok(out)
    }

    /// Applies a sequence of interventions with stored-noise replay.
    pub fn intervene(&self, x: &[f64], u: &ExogenousRecord, ops: &[Intervention]) -> Result<Vec<f64>, ScmError> {
        self.check_len(x)?;
        let mut hard: Vec<Option<f64>> = vec![None; self.dim()];
        let mut shift = vec![0.0; self.dim()];
        for op in ops {
            if op.node() >= self.dim() {
                return Err(ScmError::UnknownNode(format!("node index {}", op.node())));
            }
            match *op {
                Intervention::Hard { node, value } => hard[node] = Some(value),
                Intervention::Shift { node, delta } => shift[node] += delta,
            }
        }
        let affected = self.affected(ops.iter().map(|o| o.node()));
        let mut out = x.to_vec();
        for &i in self.graph.topo_order() {
            if let Some(v) = hard[i] {
                out[i] = v;
            } else if affected.contains(&i) {
                out[i] = self.mechanisms[i].eval(&out, &u.0) + shift[i];
            }
        }
        Ok(out)
    }

    /// Nodes in `roots` and all their descendants.
    pub fn affected(&self, roots: impl IntoIterator<Item = usize>) -> BTreeSet<usize> {
        let mut set = BTreeSet::new();
        for r in roots {
            set.insert(r);
            set.extend(self.graph.descendants(r));
        }
        set
    }

    /// Batched, differentiable counterfactual. `x` and `u` are `n×d` constants,
    /// `theta` an `n×d` tape variable that is zero outside `actionable`.
    pub fn counterfactual_tape<'t>(&self, x: &Tensor, u: &Tensor, theta: Var<'t>, actionable: &[usize]) -> Var<'t> {
        let tape = theta.tape();
        let affected = self.affected(actionable.iter().copied());
        let xcols: Vec<Var<'t>> = (0..self.dim()).map(|j| tape.constant(x.column(j).to_owned().insert_axis(ndarray::Axis(1)))).collect();
        let ucols: Vec<Var<'t>> = (0..self.dim()).map(|j| tape.constant(u.column(j).to_owned().insert_axis(ndarray::Axis(1)))).collect();
        let mut cur = xcols.clone();
        for &i in self.graph.topo_order() {
            if !affected.contains(&i) {
                continue;
            }
            let mut v = self.mechanisms[i].eval(&cur, &ucols);
            if actionable.contains(&i) {
                v = v + theta.col(i);
            }
            cur[i] = v;
        }
        Var::concat_cols(&cur)
    }
}
