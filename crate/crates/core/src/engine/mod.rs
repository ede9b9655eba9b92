//! Learned counterfactual inference with a graph-conditioned variational autoencoder.
//!
//! The encoder maps every node to a latent block using messages along the
//! causal graph. The decoder regenerates each node from its latent block and
//! the values of its parents, in topological order, so a hard intervention
//! clamps one node and regenerates its descendants only.

mod fidelity;

pub use fidelity::{cf_fidelity, sample_thetas, Fidelity};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::diff::{row, Adam, Optimizer, ParamStore, Tape, Tensor, Var};
use crate::nn::{glorot, minibatches, standardize, Activation};
use crate::rng;
use crate::scm::CausalGraph;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("{0}")]
    Invalid(String),
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("engine is untrained")]
    Untrained,
    #[error("actionable nodes {0:?} are not in topological order")]
    Order(Vec<String>),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    /// Message-passing rounds in the encoder.
    pub rounds: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fixed observation noise std in standardized units.
    pub obs_std: f64,
    /// Probability per batch of cutting the incoming edges of one random node.
    pub edge_drop: f64,
    pub activation: Activation,
    /// Replace the whole vector by the decoder output after a hard
    /// intervention instead of only the intervened node's descendants.
    pub overwrite_all: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            latent_dim: 4,
            hidden: 32,
            rounds: 2,
            lr: 1e-3,
            epochs: 40,
            batch_size: 128,
            seed: 0,
            obs_std: 0.1,
            edge_drop: 0.0,
            activation: Activation::Relu,
            overwrite_all: false,
        }
    }
}

/// Per-epoch ELBO terms and final per-node diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    /// Reconstruction MSE per node (standardized, latent means, observed parents).
    pub recon_mse: Vec<f64>,
    pub kl: Vec<f64>,
    pub untrained: bool,
}

#[derive(Debug, Clone)]
struct NodeParams {
    emb_w: usize,
    emb_b: usize,
    /// Per round: self weight and bias.
    self_w: Vec<usize>,
    self_b: Vec<usize>,
    mu_w: usize,
    mu_b: usize,
    lv_w: usize,
    lv_b: usize,
    dec_z: usize,
    dec_b: usize,
    dec_w2: usize,
    dec_b2: usize,
    dec_out: usize,
    dec_out_b: usize,
}

/// Graph VAE over standardized features.
#[derive(Debug, Clone)]
pub struct GraphVae {
    pub config: EngineConfig,
    graph: CausalGraph,
    mean: Vec<f64>,
    std: Vec<f64>,
    params: ParamStore,
    nodes: Vec<NodeParams>,
    /// Per round, keyed by `(parent, child)`.
    msg_w: Vec<BTreeMap<(usize, usize), usize>>,
    /// Decoder parent weights keyed by `(parent, child)`.
    dec_par: BTreeMap<(usize, usize), usize>,
    trained: bool,
}

type Parents = Vec<Vec<usize>>;

impl GraphVae {
    pub fn new(graph: &CausalGraph, mean: &[f64], std: &[f64], config: &EngineConfig) -> Result<Self, EngineError> {
        let d = graph.len();
        if mean.len() != d || std.len() != d {
            return Err(EngineError::Invalid(format!("standardization stats for {} features, graph has {d}", mean.len())));
        }
        let c = config;
        if c.latent_dim == 0 || c.hidden == 0 || c.batch_size == 0 || !(c.lr > 0.0) || !(c.obs_std > 0.0) {
            return Err(EngineError::Invalid(format!("bad engine settings {c:?}")));
        }
        if !(0.0..=1.0).contains(&c.edge_drop) {
            return Err(EngineError::Invalid(format!("edge_drop {} outside [0, 1]", c.edge_drop)));
        }
        let (h, dz) = (c.hidden, c.latent_dim);
        let mut rng = rng::stream(c.seed, "engine-init");
        let mut p = ParamStore::new();
        let zeros = |r, c| Tensor::zeros((r, c));
        let mut nodes = Vec::with_capacity(d);
        for i in 0..d {
            let emb_w = p.add(format!("enc.{i}.emb.w"), glorot(&mut rng, 1, h));
            let emb_b = p.add(format!("enc.{i}.emb.b"), zeros(1, h));
            let mut self_w = Vec::new();
            let mut self_b = Vec::new();
            for r in 0..c.rounds {
                self_w.push(p.add(format!("enc.{i}.r{r}.w"), glorot(&mut rng, h, h)));
                self_b.push(p.add(format!("enc.{i}.r{r}.b"), zeros(1, h)));
            }
            let mu_w = p.add(format!("enc.{i}.mu.w"), glorot(&mut rng, h, dz));
            let mu_b = p.add(format!("enc.{i}.mu.b"), zeros(1, dz));
            let lv_w = p.add(format!("enc.{i}.lv.w"), glorot(&mut rng, h, dz).mapv(|v| 0.1 * v));
            let lv_b = p.add(format!("enc.{i}.lv.b"), zeros(1, dz));
            let dec_z = p.add(format!("dec.{i}.z.w"), glorot(&mut rng, dz, h));
            let dec_b = p.add(format!("dec.{i}.b"), zeros(1, h));
            let dec_w2 = p.add(format!("dec.{i}.l2.w"), glorot(&mut rng, h, h));
            let dec_b2 = p.add(format!("dec.{i}.l2.b"), zeros(1, h));
            let dec_out = p.add(format!("dec.{i}.out.w"), glorot(&mut rng, h, 1));
            let dec_out_b = p.add(format!("dec.{i}.out.b"), zeros(1, 1));
            nodes.push(NodeParams {
                emb_w,
                emb_b,
                self_w,
                self_b,
                mu_w,
                mu_b,
                lv_w,
                lv_b,
                dec_z,
                dec_b,
                dec_w2,
                dec_b2,
                dec_out,
                dec_out_b,
            });
        }
        let mut msg_w = Vec::new();
        for r in 0..c.rounds {
            let mut m = BTreeMap::new();
            for (pa, ch) in graph.edges() {
                m.insert((pa, ch), p.add(format!("enc.{pa}->{ch}.r{r}.w"), glorot(&mut rng, h, h)));
            }
            msg_w.push(m);
        }
        let mut dec_par = BTreeMap::new();
        for (pa, ch) in graph.edges() {
            dec_par.insert((pa, ch), p.add(format!("dec.{pa}->{ch}.w"), glorot(&mut rng, 1, h)));
        }
        Ok(Self {
            config: config.clone(),
            graph: graph.clone(),
            mean: mean.to_vec(),
            std: std.to_vec(),
            params: p,
            nodes,
            msg_w,
            dec_par,
            trained: false,
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.graph.len()
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn standardization(&self) -> (&[f64], &[f64]) {
        (&self.mean, &self.std)
    }

    fn act<'t>(&self, v: Var<'t>) -> Var<'t> {
        self.config.activation.apply(v)
    }

    fn parents(&self) -> Parents {
        (0..self.dim()).map(|i| self.graph.parents(i)).collect()
    }

    fn mutilated(&self, node: usize) -> Parents {
        let mut p = self.parents();
        p[node].clear();
        p
    }

    /// Latent means and log-variances per node.
    fn encode<'t>(&self, p: &[Var<'t>], cols: &[Var<'t>], parents: &Parents) -> (Vec<Var<'t>>, Vec<Var<'t>>) {
        let d = self.dim();
        let mut h: Vec<Var<'t>> =
            (0..d).map(|i| cols[i].matmul(p[self.nodes[i].emb_w]).add_row(p[self.nodes[i].emb_b])).map(|v| self.act(v)).collect();
        for r in 0..self.config.rounds {
            h = (0..d)
                .map(|i| {
                    let n = &self.nodes[i];
                    let mut acc = h[i].matmul(p[n.self_w[r]]);
                    for &pa in &parents[i] {
                        acc = acc + h[pa].matmul(p[self.msg_w[r][&(pa, i)]]);
                    }
                    self.act(acc.add_row(p[n.self_b[r]]))
                })
                .collect();
        }
        let mu = (0..d).map(|i| h[i].affine(p[self.nodes[i].mu_w], p[self.nodes[i].mu_b])).collect();
        let lv = (0..d).map(|i| h[i].affine(p[self.nodes[i].lv_w], p[self.nodes[i].lv_b])).collect();
        (mu, lv)
    }

    /// Regenerates node `i` from its latent block and current parent values.
    fn decode_node<'t>(&self, p: &[Var<'t>], i: usize, z: Var<'t>, vals: &[Var<'t>], parents: &[usize]) -> Var<'t> {
        let n = &self.nodes[i];
        let mut pre = z.matmul(p[n.dec_z]);
        for &pa in parents {
            pre = pre + vals[pa].matmul(p[self.dec_par[&(pa, i)]]);
        }
        let h1 = self.act(pre.add_row(p[n.dec_b]));
        let h2 = self.act(h1.affine(p[n.dec_w2], p[n.dec_b2]));
        h2.affine(p[n.dec_out], p[n.dec_out_b])
    }

    /// One hard intervention `do(x_node = value)` on standardized columns.
    fn hard_step<'t>(&self, p: &[Var<'t>], cur: &[Var<'t>], node: usize, value: Var<'t>) -> Vec<Var<'t>> {
        let (z, _) = self.encode(p, cur, &self.parents());
        let mut out = cur.to_vec();
        out[node] = value;
        if self.config.overwrite_all {
            // z̄ only influences the output when the whole vector is replaced.
            let cut = self.mutilated(node);
            let (zbar, _) = self.encode(p, &out, &cut);
            let mut zt = z;
            zt[node] = zbar[node];
            let mut dec = out.clone();
            for &j in self.graph.topo_order() {
                dec[j] = self.decode_node(p, j, zt[j], &dec, &cut[j]);
            }
            return dec;
        }
        let desc = self.graph.descendants(node);
        for &j in self.graph.topo_order() {
            if desc.contains(&j) {
                out[j] = self.decode_node(p, j, z[j], &out, &self.graph.parents(j));
            }
        }
        out
    }

    fn check(&self) -> Result<(), EngineError> {
        if self.trained {
            Ok(())
        } else {
            Err(EngineError::Untrained)
        }
    }

    fn std_cols<'t>(&self, tape: &'t Tape, x: &Tensor) -> Vec<Var<'t>> {
        let z = standardize(x, &self.mean, &self.std);
        (0..self.dim()).map(|j| tape.constant(z.column(j).to_owned().insert_axis(ndarray::Axis(1)))).collect()
    }

    /// Raw-unit output. Columns outside `touched` are copied from `x` so they stay bit-identical.
    fn raw_out<'t>(&self, x: &Tensor, cols: &[Var<'t>], touched: &BTreeSet<usize>) -> Var<'t> {
        let tape = cols[0].tape();
        let out: Vec<Var<'t>> = (0..self.dim())
            .map(|j| {
                if self.config.overwrite_all || touched.contains(&j) {
                    cols[j].scale(self.std[j]).shift(self.mean[j])
                } else {
                    tape.constant(x.column(j).to_owned().insert_axis(ndarray::Axis(1)))
                }
            })
            .collect();
        Var::concat_cols(&out)
    }

    /// Hard intervention on every row of `x` (raw units); `value` is an `n×1`
    /// column and the result is differentiable in it.
    pub fn counterfactual_hard_var<'t>(&self, tape: &'t Tape, x: &Tensor, node: usize, value: Var<'t>) -> Result<Var<'t>, EngineError> {
        self.check()?;
        if node >= self.dim() {
            return Err(EngineError::Invalid(format!("node {node} out of range")));
        }
        let p = self.params.bind_frozen(tape);
        let cur = self.std_cols(tape, x);
        let v = value.shift(-self.mean[node]).scale(1.0 / self.std[node]);
        let out = self.raw_out(x, &self.hard_step(&p, &cur, node, v), &self.graph.descendants(node));
        if self.config.overwrite_all {
            return Ok(out);
        }
        let cols: Vec<Var<'t>> = (0..self.dim()).map(|j| if j == node { value } else { out.col(j) }).collect();
        Ok(Var::concat_cols(&cols))
    }

    /// `do(x_node = value)` for a single raw row.
    pub fn counterfactual_hard(&self, x: &[f64], node: usize, value: f64) -> Result<Vec<f64>, EngineError> {
        let tape = Tape::new();
        let out = self.counterfactual_hard_var(&tape, &row(x), node, tape.constant(row(&[value])))?;
        Ok(out.value().iter().copied().collect())
    }

    /// Soft intervention as a sequence of hard interventions over `actionable`
    /// (topologically sorted): `x̄_i ← x_i + θ_i` with `x` reflecting earlier steps.
    /// `theta` is `n×d` in raw units; the result is `n×d` raw and differentiable in `theta`.
    pub fn soft_intervention_var<'t>(&self, x: &Tensor, theta: Var<'t>, actionable: &[usize]) -> Result<Var<'t>, EngineError> {
        self.check()?;
        self.check_order(actionable)?;
        let tape = theta.tape();
        let p = self.params.bind_frozen(tape);
        let mut cur = self.std_cols(tape, x);
        let mut touched = BTreeSet::new();
        for &i in actionable {
            let v = cur[i] + theta.col(i).scale(1.0 / self.std[i]);
            cur = self.hard_step(&p, &cur, i, v);
            touched.insert(i);
            touched.extend(self.graph.descendants(i));
        }
        Ok(self.raw_out(x, &cur, &touched))
    }

    pub fn soft_intervention(&self, x: &Tensor, theta: &Tensor, actionable: &[usize]) -> Result<Tensor, EngineError> {
        let tape = Tape::new();
        let out = self.soft_intervention_var(x, tape.constant(theta.clone()), actionable)?;
        Ok((*out.value()).clone())
    }

    pub fn check_order(&self, actionable: &[usize]) -> Result<(), EngineError> {
        let rank = self.graph.topo_rank();
        if actionable.iter().any(|&i| i >= self.dim()) {
            return Err(EngineError::Invalid(format!("actionable {actionable:?} out of range")));
        }
        if actionable.windows(2).any(|w| rank[w[0]] >= rank[w[1]]) {
            let names = actionable.iter().map(|&i| self.graph.names()[i].clone()).collect();
            return Err(EngineError::Order(names));
        }
        Ok(())
    }

    /// Reconstruction with latent means and observed parents, in raw units.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor, EngineError> {
        self.check()?;
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        let cols = self.std_cols(&tape, x);
        let parents = self.parents();
        let (mu, _) = self.encode(&p, &cols, &parents);
        let out: Vec<Var> = (0..self.dim()).map(|i| self.decode_node(&p, i, mu[i], &cols, &parents[i])).collect();
        let all = (0..self.dim()).collect();
        Ok((*self.raw_out(x, &out, &all).value()).clone())
    }

    /// Maximizes the ELBO on the rows of `x` (raw units).
    pub fn train(&mut self, x: &Tensor) -> Result<TrainReport, EngineError> {
        if x.ncols() != self.dim() {
            return Err(EngineError::Invalid(format!("data has {} columns, graph {}", x.ncols(), self.dim())));
        }
        if x.nrows() == 0 {
            return Err(EngineError::Invalid("no training rows".into()));
        }
        let z = standardize(x, &self.mean, &self.std);
        let mut report = TrainReport { untrained: self.config.epochs == 0, ..Default::default() };
        let mut opt = Adam::new(self.config.lr);
        let mut rng = rng::stream(self.config.seed, "engine-train");
        let inv_two_var = 1.0 / (2.0 * self.config.obs_std * self.config.obs_std);
        let d = self.dim();
        for epoch in 0..self.config.epochs {
            let mut total = 0.0;
            for (b, idx) in minibatches(z.nrows(), self.config.batch_size, &mut rng).into_iter().enumerate() {
                let mut parents = self.parents();
                if self.config.edge_drop > 0.0 && rand::Rng::random::<f64>(&mut rng) < self.config.edge_drop {
                    parents[rand::Rng::random_range(&mut rng, 0..d)].clear();
                }
                let n = idx.len();
                let eps: Vec<Tensor> = (0..d)
                    .map(|_| Tensor::from_shape_fn((n, self.config.latent_dim), |_| StandardNormal.sample(&mut rng)))
                    .collect();
                let tape = Tape::new();
                let p = self.params.bind(&tape);
                let batch = z.select(ndarray::Axis(0), &idx);
                let cols: Vec<Var> =
                    (0..d).map(|j| tape.constant(batch.column(j).to_owned().insert_axis(ndarray::Axis(1)))).collect();
                let (mu, lv) = self.encode(&p, &cols, &parents);
                let mut loss = tape.scalar(0.0);
                for i in 0..d {
                    let zi = mu[i] + lv[i].scale(0.5).exp() * tape.constant(eps[i].clone());
                    let xi = self.decode_node(&p, i, zi, &cols, &parents[i]);
                    let recon = (cols[i] - xi).square().sum().scale(inv_two_var);
                    let kl = (mu[i].square() + lv[i].exp() - lv[i]).shift(-1.0).sum().scale(0.5);
                    loss = loss + recon + kl;
                }
                let loss = loss.scale(1.0 / n as f64);
                let l = loss.item();
                if !l.is_finite() {
                    return Err(EngineError::Diverged { epoch, batch: b });
                }
                total += l * n as f64;
                let grads = tape.backward(loss).expect("scalar loss");
                self.params.accumulate(&grads, &p);
                opt.step(&mut self.params);
            }
            report.epoch_loss.push(total / z.nrows() as f64);
        }
        self.trained = true;
        let (mse, kl) = self.diagnostics(&z);
        report.recon_mse = mse;
        report.kl = kl;
        Ok(report)
    }

    fn diagnostics(&self, z: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        let cols: Vec<Var> = (0..self.dim()).map(|j| tape.constant(z.column(j).to_owned().insert_axis(ndarray::Axis(1)))).collect();
        let parents = self.parents();
        let (mu, lv) = self.encode(&p, &cols, &parents);
        let n = z.nrows() as f64;
        let mut mse = Vec::new();
        let mut kl = Vec::new();
        for i in 0..self.dim() {
            let xi = self.decode_node(&p, i, mu[i], &cols, &parents[i]);
            mse.push((cols[i] - xi).square().sum().item() / n);
            kl.push((mu[i].square() + lv[i].exp() - lv[i]).shift(-1.0).sum().item() * 0.5 / n);
        }
        (mse, kl)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("engine", &self.config).with_graph(self.graph.hash());
        ck.insert_params("vae", &self.params);
        ck.insert_row("mean", &self.mean);
        ck.insert_row("std", &self.std);
        ck
    }

    /// Restores an engine; the checkpoint's graph hash must match `graph`.
    pub fn from_checkpoint(ck: &Checkpoint, graph: &CausalGraph) -> Result<Self, EngineError> {
        ck.check_graph(&graph.hash())?;
        let config: EngineConfig = ck.config()?;
        let mut e = Self::new(graph, &ck.row("mean")?, &ck.row("std")?, &config)?;
        ck.load_params("vae", &mut e.params)?;
        e.trained = true;
        Ok(e)
    }

    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &Path, graph: &CausalGraph) -> Result<Self, EngineError> {
        Self::from_checkpoint(&Checkpoint::load(path, "engine")?, graph)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }
}

/// Trains a fresh engine on `x`.
pub fn train_engine(
    x: &Tensor,
    graph: &CausalGraph,
    mean: &[f64],
    std: &[f64],
    config: &EngineConfig,
) -> Result<(GraphVae, TrainReport), EngineError> {
    let mut e = GraphVae::new(graph, mean, std, config)?;
    let report = e.train(x)?;
    Ok((e, report))
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use super::*;
    use crate::data::column_stats;
    use crate::diff::grad_check;
    use crate::scm::{ExogenousRecord, Intervention, Mechanism, NoiseSpec, Scm, Term};

    fn chain() -> Scm {
        let g = CausalGraph::from_named(&["X1", "X2"], &[("X1", "X2")]).unwrap();
        let m1 = Mechanism::catalog(0, vec![], NoiseSpec::Normal { mean: 0.0, std: 1.0 });
        let w = [(0usize, 2.0)].into_iter().collect();
        let m2 = Mechanism::catalog(1, vec![Term::Linear { weights: w }], NoiseSpec::Normal { mean: 0.0, std: 0.5 });
        Scm::new(g, vec![m1, m2]).unwrap()
    }

    fn to_tensor(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
    }

    struct Fixture {
        scm: Scm,
        engine: GraphVae,
        test_x: Tensor,
        test_u: Tensor,
    }

    fn fixture() -> &'static Fixture {
        static F: OnceLock<Fixture> = OnceLock::new();
        F.get_or_init(|| {
            let scm = chain();
            let train = to_tensor(&scm.sample(3000, 1).unwrap().x);
            let (mean, std) = column_stats(&train);
            let config = EngineConfig { epochs: 30, batch_size: 64, ..EngineConfig::default() };
            let (engine, _) = train_engine(&train, scm.graph(), &mean, &std, &config).unwrap();
            let test = scm.sample(500, 2).unwrap();
            Fixture { scm, engine, test_x: to_tensor(&test.x), test_u: to_tensor(&test.u) }
        })
    }

    #[test]
    fn chain_counterfactual_matches_oracle() {
        let f = fixture();
        let (_, std) = f.engine.standardization();
        let mut sq = [0.0; 2];
        let n = f.test_x.nrows();
        for i in 0..n {
            let x = f.test_x.row(i).to_vec();
            let value = x[0] + ((i % 7) as f64 - 3.0) * 0.3;
            let got = f.engine.counterfactual_hard(&x, 0, value).unwrap();
            let u = ExogenousRecord(f.test_u.row(i).to_vec());
            let want = f.scm.intervene(&x, &u, &[Intervention::Hard { node: 0, value }]).unwrap();
            for j in 0..2 {
                sq[j] += ((got[j] - want[j]) / std[j]).powi(2) / n as f64;
            }
        }
        assert_eq!(sq[0], 0.0);
        assert!(sq[1].sqrt() < 0.2, "standardized rms {}", sq[1].sqrt());
    }

    #[test]
    fn root_intervention_moves_child_with_coefficient_sign() {
        let f = fixture();
        for i in 0..50 {
            let x = f.test_x.row(i).to_vec();
            let up = f.engine.counterfactual_hard(&x, 0, x[0] + 1.0).unwrap();
            let down = f.engine.counterfactual_hard(&x, 0, x[0] - 1.0).unwrap();
            assert!(up[1] > x[1] && down[1] < x[1], "row {i}: {x:?} {up:?} {down:?}");
        }
    }

    #[test]
    fn hard_intervention_keeps_non_descendants_bit_identical() {
        let f = fixture();
        let x = f.test_x.row(3).to_vec();
        let out = f.engine.counterfactual_hard(&x, 1, 4.0).unwrap();
        assert_eq!(out[0].to_bits(), x[0].to_bits());
        assert_eq!(out[1], 4.0);
    }

    #[test]
    fn identity_intervention_is_close() {
        let f = fixture();
        let (_, std) = f.engine.standardization();
        let zero = Tensor::zeros(f.test_x.dim());
        let out = f.engine.soft_intervention(&f.test_x, &zero, &[0, 1]).unwrap();
        for j in 0..2 {
            let d = (&out.column(j) - &f.test_x.column(j)) / std[j];
            let rms = d.mapv(|v| v * v).mean().unwrap().sqrt();
            assert!(rms < 0.15, "column {j}: rms {rms}");
        }
    }

    #[test]
    fn single_action_equals_one_hard_step() {
        let f = fixture();
        let x = f.test_x.row(5).to_vec();
        let mut theta = Tensor::zeros((1, 2));
        theta[(0, 0)] = 0.7;
        let soft = f.engine.soft_intervention(&row(&x), &theta, &[0]).unwrap();
        let hard = f.engine.counterfactual_hard(&x, 0, x[0] + 0.7).unwrap();
        for j in 0..2 {
            assert!((soft[(0, j)] - hard[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_gradient_matches_finite_differences() {
        let f = fixture();
        let x = f.test_x.slice(ndarray::s![0..4, ..]).to_owned();
        let point = Tensor::from_shape_fn((4, 2), |(i, j)| 0.3 * i as f64 - 0.2 * j as f64 + 0.1);
        let err = grad_check(
            |_, theta| f.engine.soft_intervention_var(&x, theta, &[0, 1]).unwrap().square().sum(),
            &point,
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-3, "relative error {err}");
    }

    #[test]
    fn actionable_order_is_checked() {
        let f = fixture();
        let theta = Tensor::zeros((1, 2));
        let err = f.engine.soft_intervention(&f.test_x.slice(ndarray::s![0..1, ..]).to_owned(), &theta, &[1, 0]);
        assert!(matches!(err, Err(EngineError::Order(_))));
    }

    #[test]
    fn untrained_engine_is_rejected() {
        let e = GraphVae::new(chain().graph(), &[0.0, 0.0], &[1.0, 1.0], &EngineConfig::default()).unwrap();
        assert!(matches!(e.counterfactual_hard(&[0.0, 0.0], 0, 1.0), Err(EngineError::Untrained)));
    }

    #[test]
    fn zero_epochs_flags_untrained() {
        let x = to_tensor(&chain().sample(50, 3).unwrap().x);
        let config = EngineConfig { epochs: 0, ..EngineConfig::default() };
        let (_, report) = train_engine(&x, chain().graph(), &[0.0, 0.0], &[1.0, 1.0], &config).unwrap();
        assert!(report.untrained);
        assert!(report.epoch_loss.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let x = to_tensor(&chain().sample(200, 4).unwrap().x);
        let config = EngineConfig { epochs: 2, batch_size: 32, edge_drop: 0.5, ..EngineConfig::default() };
        let run = || train_engine(&x, chain().graph(), &[0.0, 0.0], &[1.0, 2.0], &config).unwrap().0;
        assert_eq!(run().params().to_stored(), run().params().to_stored());
    }

    #[test]
    fn edge_masking_removes_parent_influence() {
        let f = fixture();
        let e = &f.engine;
        let tape = Tape::new();
        let p = e.params.bind_frozen(&tape);
        let enc = |x1: f64, parents: &Parents| {
            let cols = vec![tape.constant(row(&[x1])), tape.constant(row(&[0.5]))];
            e.encode(&p, &cols, parents).0[1].value().iter().copied().collect::<Vec<_>>()
        };
        let cut = e.mutilated(1);
        assert_eq!(enc(-1.0, &cut), enc(2.0, &cut));
        assert_ne!(enc(-1.0, &e.parents()), enc(2.0, &e.parents()));
    }

    #[test]
    fn overwrite_all_decodes_untouched_nodes() {
        let f = fixture();
        let mut e = f.engine.clone();
        e.config.overwrite_all = true;
        let (_, std) = e.standardization();
        let x = f.test_x.row(0).to_vec();
        let out = e.counterfactual_hard(&x, 1, x[1] + 0.5).unwrap();
        assert_ne!(out[0].to_bits(), x[0].to_bits());
        assert!(((out[0] - x[0]) / std[0]).abs() < 0.15);
    }

    #[test]
    fn checkpoint_round_trip_and_graph_check() {
        let f = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("engine.json");
        f.engine.save(&path).unwrap();
        let back = GraphVae::load(&path, f.scm.graph()).unwrap();
        let x = f.test_x.row(7).to_vec();
        assert_eq!(back.counterfactual_hard(&x, 0, 0.3).unwrap(), f.engine.counterfactual_hard(&x, 0, 0.3).unwrap());
        let other = CausalGraph::from_named(&["X1", "X2"], &[("X2", "X1")]).unwrap();
        assert!(matches!(
            GraphVae::load(&path, &other),
            Err(EngineError::Checkpoint(CheckpointError::GraphMismatch { .. }))
        ));
    }

    #[test]
    fn fidelity_of_the_oracle_is_zero() {
        let f = fixture();
        let theta = sample_thetas(f.test_x.nrows(), &[1.0, 1.0], &[0, 1], 0.5, &mut rng::stream(1, "t"));
        let fid = cf_fidelity(&f.scm, &f.test_x, &f.test_u, &theta, |x, t| {
            Ok(Tensor::from_shape_fn(x.dim(), |(i, j)| {
                f.scm
                    .counterfactual_exact(&x.row(i).to_vec(), &ExogenousRecord(f.test_u.row(i).to_vec()), &t.row(i).to_vec())
                    .unwrap()[j]
            }))
        })
        .unwrap();
        assert_eq!((fid.mse, fid.sse), (0.0, 0.0));
        let empty = Tensor::zeros((0, 2));
        assert!(cf_fidelity(&f.scm, &empty, &empty, &empty, |x, _| Ok(x.clone())).is_err());
    }
}
