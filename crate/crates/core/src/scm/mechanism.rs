use std::collections::{BTreeMap, BTreeSet};

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::num::{lift_rows, Num};
use super::ScmError;
use crate::rng::Rng;

/// Distribution of one exogenous variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum NoiseSpec {
    Normal { mean: f64, std: f64 },
    /// Shape/scale parameterisation, mean `shape·scale`.
    Gamma { shape: f64, scale: f64 },
    Bernoulli { p: f64 },
    /// Values `0, 1, …, k-1` with the given probabilities.
    Categorical { probs: Vec<f64> },
    MixtureNormal { weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64> },
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

fn pick(rng: &mut Rng, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if r < *p {
            return i;
        }
        r -= p;
    }
    probs.len() - 1
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), ScmError> {
        let ok = match self {
            NoiseSpec::Normal { mean, std } => mean.is_finite() && *std >= 0.0 && std.is_finite(),
            NoiseSpec::Gamma { shape, scale } => *shape > 0.0 && *scale > 0.0,
            NoiseSpec::Bernoulli { p } => (0.0..=1.0).contains(p),
            NoiseSpec::Categorical { probs } => !probs.is_empty() && probs.iter().all(|p| *p >= 0.0) && probs.iter().sum::<f64>() > 0.0,
            NoiseSpec::MixtureNormal { weights, means, stds } => {
                !weights.is_empty()
                    && weights.len() == means.len()
                    && means.len() == stds.len()
                    && weights.iter().all(|w| *w >= 0.0)
                    && stds.iter().all(|s| *s >= 0.0)
            }
            NoiseSpec::Uniform { low, high } => low < high,
            NoiseSpec::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(ScmError::Invalid(format!("bad noise parameters {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            NoiseSpec::Normal { mean, std } => {
                if *std == 0.0 {
                    *mean
                } else {
                    Normal::new(*mean, *std).expect("validated").sample(rng)
                }
            }
            NoiseSpec::Gamma { shape, scale } => Gamma::new(*shape, *scale).expect("validated").sample(rng),
            NoiseSpec::Bernoulli { p } => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseSpec::Categorical { probs } => pick(rng, probs) as f64,
            NoiseSpec::MixtureNormal { weights, means, stds } => {
                let k = pick(rng, weights);
                means[k] + stds[k] * Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
            }
            NoiseSpec::Uniform { low, high } => rng.random_range(*low..*high),
            NoiseSpec::Constant { value } => *value,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            NoiseSpec::Normal { mean, .. } => *mean,
            NoiseSpec::Gamma { shape, scale } => shape * scale,
            NoiseSpec::Bernoulli { p } => *p,
            NoiseSpec::Categorical { probs } => {
                let t: f64 = probs.iter().sum();
                probs.iter().enumerate().map(|(i, p)| i as f64 * p / t).sum()
            }
            NoiseSpec::MixtureNormal { weights, means, .. } => {
                let t: f64 = weights.iter().sum();
                weights.iter().zip(means).map(|(w, m)| w * m / t).sum()
            }
            NoiseSpec::Uniform { low, high } => 0.5 * (low + high),
            NoiseSpec::Constant { value } => *value,
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Building blocks of user-defined mechanisms. A catalog mechanism is the
/// sum of its terms plus additive noise. `K` names a node: `String` in JSON
/// documents, `usize` once resolved against a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound(serialize = "K: Serialize + Ord", deserialize = "K: Deserialize<'de> + Ord"))]
pub enum Term<K> {
    Const { value: f64 },
    /// `Σ w_p·x_p`
    Linear { weights: BTreeMap<K, f64> },
    /// `scale·σ(bias + Σ w_p·x_p)`
    Logistic {
        weights: BTreeMap<K, f64>,
        #[serde(default)]
        bias: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `value·1{x_input > threshold}`
    Indicator { input: K, threshold: f64, value: f64 },
    /// `coef·Π x_p`
    Product {
        inputs: Vec<K>,
        #[serde(default = "one")]
        coef: f64,
    },
    /// `coef·exp(bias + Σ w_p·x_p)`
    Exp {
        weights: BTreeMap<K, f64>,
        #[serde(default)]
        bias: f64,
        #[serde(default = "one")]
        coef: f64,
    },
    /// Inner term clamped to `[min, max]`.
    Clamp { term: Box<Term<K>>, min: f64, max: f64 },
}

impl<K: Ord + Clone> Term<K> {
    pub fn inputs(&self) -> BTreeSet<K> {
        match self {
            Term::Const { .. } => BTreeSet::new(),
            Term::Linear { weights } | Term::Logistic { weights, .. } | Term::Exp { weights, .. } => {
                weights.keys().cloned().collect()
            }
            Term::Indicator { input, .. } => [input.clone()].into_iter().collect(),
            Term::Product { inputs, .. } => inputs.iter().cloned().collect(),
            Term::Clamp { term, .. } => term.inputs(),
        }
    }

    pub fn map_keys<J: Ord, E>(&self, f: &impl Fn(&K) -> Result<J, E>) -> Result<Term<J>, E> {
        let w = |m: &BTreeMap<K, f64>| -> Result<BTreeMap<J, f64>, E> {
            m.iter().map(|(k, v)| Ok((f(k)?, *v))).collect()
        };
        Ok(match self {
            Term::Const { value } => Term::Const { value: *value },
            Term::Linear { weights } => Term::Linear { weights: w(weights)? },
            Term::Logistic { weights, bias, scale } => Term::Logistic { weights: w(weights)?, bias: *bias, scale: *scale },
            Term::Indicator { input, threshold, value } => {
                Term::Indicator { input: f(input)?, threshold: *threshold, value: *value }
            }
            Term::Product { inputs, coef } => {
                Term::Product { inputs: inputs.iter().map(f).collect::<Result<_, _>>()?, coef: *coef }
            }
            Term::Exp { weights, bias, coef } => Term::Exp { weights: w(weights)?, bias: *bias, coef: *coef },
            Term::Clamp { term, min, max } => Term::Clamp { term: Box::new(term.map_keys(f)?), min: *min, max: *max },
        })
    }
}

impl Term<usize> {
    fn weighted<T: Num>(weights: &BTreeMap<usize, f64>, bias: f64, x: &[T], like: &T) -> T {
        weights.iter().fold(like.konst(bias), |acc, (&p, &w)| acc.add(&x[p].scale(w)))
    }

    pub fn eval<T: Num>(&self, x: &[T], like: &T) -> T {
        match self {
            Term::Const { value } => like.konst(*value),
            Term::Linear { weights } => Self::weighted(weights, 0.0, x, like),
            Term::Logistic { weights, bias, scale } => Self::weighted(weights, *bias, x, like).sigmoid().scale(*scale),
            Term::Indicator { input, threshold, value } => {
                let t = *threshold;
                x[*input].ind(|v| v > t).scale(*value)
            }
            Term::Product { inputs, coef } => {
                inputs.iter().fold(like.konst(*coef), |acc, &p| acc.mul(&x[p]))
            }
            Term::Exp { weights, bias, coef } => Self::weighted(weights, *bias, x, like).exp().scale(*coef),
            Term::Clamp { term, min, max } => term.eval(x, like).clamp_min(*min).clamp_max(*max),
        }
    }
}

/// Mechanisms of the two built-in data-generating processes.
///
/// Loan node order: G, A, E, L, D, I, S.
/// Adult node order: R, A, N, S, E, H, W, M, O, L.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    LoanG,
    LoanA,
    LoanE,
    LoanL,
    LoanD,
    LoanI,
    LoanS,
    AdultR,
    AdultA,
    AdultN,
    AdultS,
    AdultE,
    AdultH,
    AdultW,
    AdultM,
    AdultO,
    AdultL,
}

const ALL_BUILTINS: [Builtin; 17] = [
    Builtin::LoanG,
    Builtin::LoanA,
    Builtin::LoanE,
    Builtin::LoanL,
    Builtin::LoanD,
    Builtin::LoanI,
    Builtin::LoanS,
    Builtin::AdultR,
    Builtin::AdultA,
    Builtin::AdultN,
    Builtin::AdultS,
    Builtin::AdultE,
    Builtin::AdultH,
    Builtin::AdultW,
    Builtin::AdultM,
    Builtin::AdultO,
    Builtin::AdultL,
];

/// Denominator floor of the Loan education mechanism.
pub const LOAN_E_DENOM_FLOOR: f64 = 1e-3;

fn is_code(v: f64, k: f64) -> bool {
    v.round() == k
}

/// Most frequent value; ties go to the smallest value.
pub fn mode(values: &[f64]) -> f64 {
    let mut best = (0usize, f64::INFINITY);
    for &v in values {
        let count = values.iter().filter(|&&w| w == v).count();
        if count > best.0 || (count == best.0 && v < best.1) {
            best = (count, v);
        }
    }
    best.1
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn sig(x: f64) -> f64 {
    crate::diff::sigmoid(x)
}

/// Adult work status from education, hours, age, native country and `U_W`.
pub fn adult_work_status(e: f64, h: f64, a: f64, n: f64, uw: f64) -> f64 {
    let s = sig(h - 30.0 + uw);
    let w1 = ind(5.0 * (e - 2.0).tanh().abs() + s > 0.3) + ind(s > 0.3) * ind(a + 1.5 * uw > 50.0)
        - ind(is_code(n, 0.0))
        + ind(is_code(n, 1.0))
        + 3.0 * ind(is_code(n, 3.0));
    let w2 = w1 * ind(w1 <= 3.0) + 3.0 * ind(w1 > 3.0);
    w2 * ind(w2 >= 0.0)
}

/// Adult marital status: mode over the auxiliary quantities r2, a1, W, h2, H, g3.
pub fn adult_marital(r: f64, s: f64, h: f64, w: f64, um: f64) -> f64 {
    let r1 = (r + 0.2 * um).trunc() * ind((0.0..=2.0).contains(&r)) + 2.0 * ind(is_code(r, 2.0));
    let r2 = 2.0 * ind(r1 == 1.0) + ind(r1 == 2.0);
    let g1 = (s + 0.5 * um).trunc();
    let g2 = ind(g1 > 1.0) + g1 * ind((0.0..=1.0).contains(&g1));
    let g3 = ind(g2 == 0.0) + 2.0 * ind(g2 == 1.0);
    // a1 = 0·1{A>0} is identically zero.
    let a1 = 0.0;
    let h1 = 3.0 * sig(h - 30.0).trunc();
    let h2 = h1 * ind(h1 <= 2.0) + 2.0 * ind(h1 > 2.0);
    mode(&[r2, a1, w, h2, h, g3])
}

/// Adult relationship status. Reads the occupation noise `U_O`, as printed.
pub fn adult_relationship(a: f64, n: f64, s: f64, e: f64, m: f64, uo: f64) -> f64 {
    let cn = uo * ind(is_code(n, 0.0)) - uo * ind(is_code(n, 1.0)) + 2.0 * uo * ind(is_code(n, 2.0))
        + 2.0 * ind(is_code(n, 3.0));
    let ce = sig(e - 30.0);
    let c = cn + ce + 2.0 * ind(a < 20.0) - 2.0 * ind(is_code(s, 0.0));
    let married = is_code(m, 1.0);
    ind(married && c >= -1.0) + 2.0 * ind(!married && c >= -1.0) + ind(!married && c < -1.0)
}

/// Adult occupation sector.
pub fn adult_occupation(r: f64, a: f64, s: f64, e: f64, w: f64, m: f64, uo: f64) -> f64 {
    let ka = 2.0 * (-(a + uo - 20.0).powi(2)).exp();
    let ke = -sig(e * uo - 30.0);
    let k = r + ka + ke + w + 3.0 * m + 4.0 * s;
    ind((1.0..=4.0).contains(&k)) + 2.0 * ind(k >= 4.0)
}

impl Builtin {
    pub fn all() -> &'static [Builtin] {
        &ALL_BUILTINS
    }

    pub fn name(self) -> &'static str {
        use Builtin::*;
        match self {
            LoanG => "loan.G",
            LoanA => "loan.A",
            LoanE => "loan.E",
            LoanL => "loan.L",
            LoanD => "loan.D",
            LoanI => "loan.I",
            LoanS => "loan.S",
            AdultR => "adult.R",
            AdultA => "adult.A",
            AdultN => "adult.N",
            AdultS => "adult.S",
            AdultE => "adult.E",
            AdultH => "adult.H",
            AdultW => "adult.W",
            AdultM => "adult.M",
            AdultO => "adult.O",
            AdultL => "adult.L",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        ALL_BUILTINS.iter().copied().find(|b| b.name() == name)
    }

    /// Node index of this mechanism within its built-in model.
    pub fn node(self) -> usize {
        use Builtin::*;
        match self {
            LoanG | AdultR => 0,
            LoanA | AdultA => 1,
            LoanE | AdultN => 2,
            LoanL | AdultS => 3,
            LoanD | AdultE => 4,
            LoanI | AdultH => 5,
            LoanS | AdultW => 6,
            AdultM => 7,
            AdultO => 8,
            AdultL => 9,
        }
    }

    pub fn parents(self) -> &'static [usize] {
        use Builtin::*;
        match self {
            LoanG | LoanA | AdultR | AdultA | AdultN | AdultS => &[],
            LoanE | LoanL => &[0, 1],
            LoanD => &[0, 1, 3],
            LoanI => &[0, 1, 2],
            LoanS => &[5],
            AdultE => &[0, 1, 2, 3],
            AdultH => &[0, 1, 2, 3, 4],
            AdultW => &[1, 2, 4, 5],
            AdultM => &[0, 3, 5, 6],
            AdultO => &[0, 1, 3, 4, 6, 7],
            AdultL => &[1, 2, 3, 4, 7],
        }
    }

    /// Noise distributions. The printed `N(0, v)` second argument is a variance.
    pub fn noise(self) -> NoiseSpec {
        use Builtin::*;
        let normal = |var: f64| NoiseSpec::Normal { mean: 0.0, std: var.sqrt() };
        match self {
            LoanG => NoiseSpec::Bernoulli { p: 0.5 },
            LoanA => NoiseSpec::Gamma { shape: 10.0, scale: 3.5 },
            LoanE => normal(0.25),
            LoanL => normal(4.0),
            LoanD => normal(9.0),
            LoanI => normal(4.0),
            LoanS => normal(25.0),
            AdultR => NoiseSpec::Categorical { probs: vec![0.85, 0.1, 0.05] },
            AdultA => NoiseSpec::Gamma { shape: 3.0, scale: 10.0 },
            AdultN => NoiseSpec::Categorical { probs: vec![0.3, 0.5, 0.1, 0.1] },
            AdultS => NoiseSpec::Bernoulli { p: 0.67 },
            AdultE => NoiseSpec::Gamma { shape: 1.0, scale: 1.0 },
            AdultH | AdultW | AdultM | AdultL => normal(1.0),
            AdultO => NoiseSpec::MixtureNormal { weights: vec![0.5, 0.5], means: vec![-2.5, 2.5], stds: vec![1.0, 1.0] },
        }
    }

    pub fn additive(self) -> bool {
        use Builtin::*;
        !matches!(self, LoanE | AdultH | AdultW | AdultM | AdultO | AdultL)
    }

    /// Evaluates the mechanism given endogenous values `x` (parents already
    /// set) and the full exogenous record `u`.
    pub fn eval<T: Num>(self, x: &[T], u: &[T]) -> T {
        use Builtin::*;
        let ui = &u[self.node()];
        match self {
            LoanG | AdultR | AdultN | AdultS => ui.clone(),
            LoanA => ui.shift(-35.0),
            LoanE => {
                let (g, a) = (&x[0], &x[1]);
                let inner = g.scale(-0.5).sub(&a.scale(0.1).sigmoid()).shift(1.0).exp();
                inner.shift(1.0).sub(ui).clamp_min(LOAN_E_DENOM_FLOOR).recip().shift(-0.5)
            }
            LoanL => {
                let (g, a) = (&x[0], &x[1]);
                a.shift(-5.0).square().scale(-0.01).shift(1.0).add(g).add(ui)
            }
            LoanD => {
                let (g, a, l) = (&x[0], &x[1], &x[3]);
                a.scale(0.1).add(&g.scale(2.0)).add(l).shift(-1.0).add(ui)
            }
            LoanI => {
                let (g, a, e) = (&x[0], &x[1], &x[2]);
                a.shift(35.0).scale(0.1).add(&g.scale(2.0)).add(&g.mul(e)).shift(-4.0).add(ui)
            }
            LoanS => x[5].relu().scale(1.5).shift(-4.0).add(ui),
            AdultA => ui.shift(17.0),
            AdultE => {
                let (r, a, n, s) = (&x[0], &x[1], &x[2], &x[3]);
                let race = lift_rows(r, &[r], |v| 2.0 * ind(is_code(v[0], 0.0)) + ind(is_code(v[0], 1.0)));
                let bonus = lift_rows(r, &[s, n], |v| {
                    (0.5 * ind(is_code(v[0], 0.0)) + ind(is_code(v[0], 1.0)))
                        * (2.0 * ind(is_code(v[1], 1.0)) + 5.0 * ind(is_code(v[1], 2.0)) + ind(is_code(v[1], 3.0)))
                });
                race.add(&a.shift(-30.0).sigmoid()).exp().add(&bonus).add(ui)
            }
            AdultH => {
                let (r, a, n, s, e) = (&x[0], &x[1], &x[2], &x[3], &x[4]);
                let base = lift_rows(r, &[n, r, s], |v| {
                    let hours = 40.0 * ind(is_code(v[0], 0.0))
                        + 36.0 * ind(is_code(v[0], 1.0))
                        + 50.0 * ind(is_code(v[0], 2.0))
                        + 30.0 * ind(is_code(v[0], 3.0));
                    let race = 0.5 * ind(is_code(v[1], 0.0)) + ind(is_code(v[1], 1.0)) + 1.3 * ind(is_code(v[1], 2.0));
                    hours * race + 2.0 * ind(is_code(v[2], 0.0))
                });
                let age = a.shift(-30.0).square().scale(-1.0).exp().scale(2.0);
                let edu = e.shift(-2.0).tanh().abs().scale(5.0);
                let young = a.ind(|v| v < 70.0);
                base.add(&age).add(&edu).add(ui).mul(&young)
            }
            AdultW => lift_rows(&x[0], &[&x[4], &x[5], &x[1], &x[2], ui], |v| {
                adult_work_status(v[0], v[1], v[2], v[3], v[4])
            }),
            AdultM => lift_rows(&x[0], &[&x[0], &x[3], &x[5], &x[6], ui], |v| adult_marital(v[0], v[1], v[2], v[3], v[4])),
            AdultO => lift_rows(&x[0], &[&x[0], &x[1], &x[3], &x[4], &x[6], &x[7], ui], |v| {
                adult_occupation(v[0], v[1], v[2], v[3], v[4], v[5], v[6])
            }),
            AdultL => lift_rows(&x[0], &[&x[1], &x[2], &x[3], &x[4], &x[7], &u[8]], |v| {
                adult_relationship(v[0], v[1], v[2], v[3], v[4], v[5])
            }),
        }
    }

    /// Closed-form noise recovery for the non-additive Loan education mechanism.
    pub fn invert(self, x: &[f64], xi: f64) -> Option<f64> {
        match self {
            Builtin::LoanE => {
                let (g, a) = (x[0], x[1]);
                let inner = (1.0 - 0.5 * g - sig(0.1 * a)).exp();
                let denom = 1.0 / (xi + 0.5);
                (denom.is_finite() && denom > LOAN_E_DENOM_FLOOR).then(|| 1.0 + inner - denom)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MechanismKind {
    /// Sum of catalog terms plus additive noise.
    Catalog(Vec<Term<usize>>),
    Builtin(Builtin),
}

/// Structural equation of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub node: usize,
    pub parents: Vec<usize>,
    pub kind: MechanismKind,
    pub noise: NoiseSpec,
    pub additive: bool,
}

impl Mechanism {
    pub fn builtin(b: Builtin) -> Self {
        Self {
            node: b.node(),
            parents: b.parents().to_vec(),
            kind: MechanismKind::Builtin(b),
            noise: b.noise(),
            additive: b.additive(),
        }
    }

    pub fn catalog(node: usize, terms: Vec<Term<usize>>, noise: NoiseSpec) -> Self {
        let parents: BTreeSet<usize> = terms.iter().flat_map(|t| t.inputs()).collect();
        Self { node, parents: parents.into_iter().collect(), kind: MechanismKind::Catalog(terms), noise, additive: true }
    }

    /// `f_i(x_pa, u)`.
    pub fn eval<T: Num>(&self, x: &[T], u: &[T]) -> T {
        match &self.kind {
            MechanismKind::Catalog(terms) => {
                let ui = &u[self.node];
                terms.iter().fold(ui.clone(), |acc, t| acc.add(&t.eval(x, ui)))
            }
            MechanismKind::Builtin(b) => b.eval(x, u),
        }
    }

    /// `f_i(x_pa, 0)` for additive mechanisms.
    pub fn structural(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut zeroed = u.to_vec();
        zeroed[self.node] = 0.0;
        self.eval(x, &zeroed)
    }

    /// Recovers `u_i` from the node's observed value, when possible.
    pub fn invert(&self, x: &[f64], u: &[f64], xi: f64) -> Option<f64> {
        if self.additive {
            return Some(xi - self.structural(x, u));
        }
        match &self.kind {
            MechanismKind::Builtin(b) => b.invert(x, xi),
            MechanismKind::Catalog(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn mode_breaks_ties_low() {
        assert_eq!(mode(&[2.0, 1.0, 2.0, 1.0, 0.0, 3.5]), 1.0);
        assert_eq!(mode(&[0.0, 0.0, 3.0, 1.0, 44.2, 2.0]), 0.0);
        assert_eq!(mode(&[5.0]), 5.0);
    }

    #[test]
    fn additive_flag_holds_at_random_points() {
        let mut rng = Rng::seed_from_u64(11);
        for b in Builtin::all().iter().filter(|b| b.additive()) {
            let m = Mechanism::builtin(*b);
            for _ in 0..50 {
                let x: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0f64).round()).collect();
                let mut u: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
                let full = m.eval(&x, &u);
                let ui = u[m.node];
                u[m.node] = 0.0;
                let base = m.eval(&x, &u);
                assert!((full - (base + ui)).abs() < 1e-12, "{}", b.name());
            }
        }
    }

    #[test]
    fn loan_education_inverts() {
        let m = Mechanism::builtin(Builtin::LoanE);
        let x = [1.0, 4.2, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut u = [0.0; 7];
        u[2] = 0.37;
        let e = m.eval(&x, &u);
        let back = m.invert(&x, &u, e).unwrap();
        assert!((back - 0.37).abs() < 1e-12);
    }

    #[test]
    fn noise_means() {
        assert_eq!(Builtin::LoanA.noise().mean(), 35.0);
        assert!((Builtin::AdultN.noise().mean() - 1.0).abs() < 1e-12);
        assert_eq!(Builtin::AdultO.noise().mean(), 0.0);
    }

    #[test]
    fn catalog_terms_evaluate() {
        let terms: Vec<Term<usize>> = vec![
            Term::Const { value: 1.0 },
            Term::Linear { weights: [(0, 2.0)].into_iter().collect() },
            Term::Indicator { input: 1, threshold: 0.0, value: 3.0 },
            Term::Product { inputs: vec![0, 1], coef: 0.5 },
            Term::Clamp { term: Box::new(Term::Linear { weights: [(1, 10.0)].into_iter().collect() }), min: -1.0, max: 1.0 },
        ];
        let m = Mechanism::catalog(2, terms, NoiseSpec::Constant { value: 0.0 });
        assert_eq!(m.parents, vec![0, 1]);
        // 1 + 2·2 + 3 + 0.5·2·0.5 + clamp(5) = 1 + 4 + 3 + 0.5 + 1
        assert!((m.eval(&[2.0, 0.5, 0.0], &[0.0, 0.0, 0.25]) - 9.75).abs() < 1e-12);
    }
}
