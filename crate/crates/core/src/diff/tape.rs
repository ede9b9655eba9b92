//! Define-by-run reverse-mode tape over dense 2-D tensors.
//!
//! Every primitive application appends one node holding its forward value.
//! [`Tape::backward`] walks the nodes in reverse creation order exactly once,
//! pushing the upstream gradient into the inputs that require it. Leaves
//! created with [`Tape::constant`] never accumulate gradient.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use ndarray::{Array2, Axis};

use super::{DiffError, Tensor};

/// Primitive operations recordable on a [`Tape`].
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// `x·W + b` with `x: n×k`, `W: k×m`, `b: 1×m`.
    Affine,
    MatMul,
    Add,
    Sub,
    /// Elementwise product.
    Mul,
    /// Adds a `1×m` row to every row of an `n×m` input.
    AddRow,
    /// Multiplies every row of an `n×m` input elementwise by a `1×m` row.
    MulRow,
    Scale(f64),
    Shift(f64),
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Abs,
    Square,
    Recip,
    /// `max(x, c)`; gradient passes only where `x > c`.
    ClampMin(f64),
    /// Elementwise `max(x, 0)`, subgradient 0 at exactly 0.
    HingeMax0,
    /// Sum of all entries, `1×1`.
    Sum,
    Mean,
    /// Per-row sum, `n×1`.
    RowSum,
    /// Euclidean norm of the flattened input, `1×1`.
    L2Norm,
    /// Euclidean norm of every row, `n×1`.
    RowL2Norm,
    SelectCols(Vec<usize>),
    /// Places the input columns at `cols` of an all-zero `n×width` output.
    ScatterCols { cols: Vec<usize>, width: usize },
    ConcatCols,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Affine => "affine",
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::AddRow => "add_row",
            Primitive::MulRow => "mul_row",
            Primitive::Scale(_) => "scale",
            Primitive::Shift(_) => "shift",
            Primitive::Relu => "relu",
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Exp => "exp",
            Primitive::Abs => "abs",
            Primitive::Square => "square",
            Primitive::Recip => "recip",
            Primitive::ClampMin(_) => "clamp_min",
            Primitive::HingeMax0 => "hinge_max0",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::RowSum => "row_sum",
            Primitive::L2Norm => "l2norm",
            Primitive::RowL2Norm => "row_l2norm",
            Primitive::SelectCols(_) => "select_cols",
            Primitive::ScatterCols { .. } => "scatter_cols",
            Primitive::ConcatCols => "concat_cols",
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Option<Primitive>,
    inputs: Vec<usize>,
    requires_grad: bool,
}

/// Append-only record of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

/// Gradients produced by one backward pass, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, `None` for constants and
    /// nodes the loss does not depend on.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but returns zeros of the right shape when absent.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = var.shape();
                Tensor::zeros((r, c))
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Option<Primitive>, inputs: Vec<usize>, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value: Rc::new(value), op, inputs, requires_grad });
        Var { tape: self, id }
    }

    /// Differentiable leaf.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, None, Vec::new(), true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, None, Vec::new(), false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::from_elem((1, 1), value))
    }

    pub fn full(&self, rows: usize, cols: usize, value: f64) -> Var<'_> {
        self.constant(Tensor::from_elem((rows, cols), value))
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Applies a primitive after validating input arity and shapes.
    pub fn apply<'t>(&'t self, op: Primitive, inputs: &[Var<'t>]) -> Result<Var<'t>, DiffError> {
        let vals: Vec<Rc<Tensor>> = inputs.iter().map(|v| self.value_of(v.id)).collect();
        let shapes: Vec<(usize, usize)> = vals.iter().map(|v| v.dim()).collect();
        let value = forward(&op, &vals, &shapes)?;
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.id].requires_grad)
        };
        Ok(self.push(value, Some(op), inputs.iter().map(|v| v.id).collect(), requires_grad))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, DiffError> {
        let shape = loss.shape();
        if shape != (1, 1) {
            return Err(DiffError::NotScalar { shape });
        }
        Ok(self.backward_with_seed(loss, Tensor::from_elem((1, 1), 1.0)))
    }

    /// Vector-Jacobian product: propagates `seed` (shaped like `output`)
    /// backwards through every node created before `output`.
    pub fn backward_with_seed(&self, output: Var<'_>, seed: Tensor) -> Gradients {
        assert_eq!(seed.dim(), output.shape(), "seed shape must match output shape");
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[output.id] = Some(seed);
        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            let Some(op) = &node.op else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let ins: Vec<&Tensor> = node.inputs.iter().map(|&i| nodes[i].value.as_ref()).collect();
            let need: Vec<bool> = node.inputs.iter().map(|&i| nodes[i].requires_grad).collect();
            let input_grads = backward_op(op, &ins, &node.value, &g, &need);
            for ((&input, ig), needed) in node.inputs.iter().zip(input_grads).zip(need) {
                if !needed {
                    continue;
                }
                if let Some(ig) = ig {
                    match &mut grads[input] {
                        Some(acc) => *acc += &ig,
                        slot @ None => *slot = Some(ig),
                    }
                }
            }
            grads[id] = Some(g);
        }
        // Only leaves that require grad and intermediate nodes keep entries.
        for (id, node) in nodes.iter().enumerate() {
            if !node.requires_grad {
                grads[id] = None;
            }
        }
        Gradients { grads }
    }
}

fn check(op: &Primitive, shapes: &[(usize, usize)], ok: bool) -> Result<(), DiffError> {
    if ok {
        Ok(())
    } else {
        Err(DiffError::ShapeMismatch { op: op.name(), shapes: shapes.to_vec() })
    }
}

fn arity(op: &Primitive, shapes: &[(usize, usize)], n: usize) -> Result<(), DiffError> {
    check(op, shapes, shapes.len() == n)
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    x.mapv(f)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn forward(op: &Primitive, v: &[Rc<Tensor>], s: &[(usize, usize)]) -> Result<Tensor, DiffError> {
    use Primitive::*;
    let out = match op {
        Affine => {
            arity(op, s, 3)?;
            check(op, s, s[0].1 == s[1].0 && s[2] == (1, s[1].1))?;
            let mut y = v[0].dot(v[1].as_ref());
            y += v[2].as_ref();
            y
        }
        MatMul => {
            arity(op, s, 2)?;
            check(op, s, s[0].1 == s[1].0)?;
            v[0].dot(v[1].as_ref())
        }
        Add | Sub | Mul => {
            arity(op, s, 2)?;
            check(op, s, s[0] == s[1])?;
            match op {
                Add => v[0].as_ref() + v[1].as_ref(),
                Sub => v[0].as_ref() - v[1].as_ref(),
                _ => v[0].as_ref() * v[1].as_ref(),
            }
        }
        AddRow | MulRow => {
            arity(op, s, 2)?;
            check(op, s, s[1] == (1, s[0].1))?;
            if *op == AddRow {
                v[0].as_ref() + v[1].as_ref()
            } else {
                v[0].as_ref() * v[1].as_ref()
            }
        }
        Scale(c) => {
            arity(op, s, 1)?;
            v[0].as_ref() * *c
        }
        Shift(c) => {
            arity(op, s, 1)?;
            v[0].as_ref() + *c
        }
        Relu | HingeMax0 => {
            arity(op, s, 1)?;
            map(&v[0], |x| x.max(0.0))
        }
        Tanh => {
            arity(op, s, 1)?;
            map(&v[0], f64::tanh)
        }
        Sigmoid => {
            arity(op, s, 1)?;
            map(&v[0], sigmoid)
        }
        Exp => {
            arity(op, s, 1)?;
            map(&v[0], f64::exp)
        }
        Abs => {
            arity(op, s, 1)?;
            map(&v[0], f64::abs)
        }
        Square => {
            arity(op, s, 1)?;
            map(&v[0], |x| x * x)
        }
        Recip => {
            arity(op, s, 1)?;
            map(&v[0], |x| 1.0 / x)
        }
        ClampMin(c) => {
            arity(op, s, 1)?;
            let c = *c;
            map(&v[0], |x| x.max(c))
        }
        Sum => {
            arity(op, s, 1)?;
            Tensor::from_elem((1, 1), v[0].sum())
        }
        Mean => {
            arity(op, s, 1)?;
            check(op, s, s[0].0 * s[0].1 > 0)?;
            Tensor::from_elem((1, 1), v[0].sum() / (s[0].0 * s[0].1) as f64)
        }
        RowSum => {
            arity(op, s, 1)?;
            v[0].sum_axis(Axis(1)).insert_axis(Axis(1))
        }
        L2Norm => {
            arity(op, s, 1)?;
            Tensor::from_elem((1, 1), v[0].iter().map(|x| x * x).sum::<f64>().sqrt())
        }
        RowL2Norm => {
            arity(op, s, 1)?;
            v[0].map_axis(Axis(1), |r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).insert_axis(Axis(1))
        }
        SelectCols(cols) => {
            arity(op, s, 1)?;
            check(op, s, cols.iter().all(|&c| c < s[0].1))?;
            v[0].select(Axis(1), cols)
        }
        ScatterCols { cols, width } => {
            arity(op, s, 1)?;
            check(op, s, cols.len() == s[0].1 && cols.iter().all(|&c| c < *width))?;
            let mut y = Tensor::zeros((s[0].0, *width));
            for (k, &c) in cols.iter().enumerate() {
                y.column_mut(c).assign(&v[0].column(k));
            }
            y
        }
        ConcatCols => {
            check(op, s, !s.is_empty() && s.iter().all(|d| d.0 == s[0].0))?;
            let views: Vec<_> = v.iter().map(|t| t.view()).collect();
            ndarray::concatenate(Axis(1), &views).expect("row counts checked")
        }
    };
    Ok(out)
}

fn col_sum(g: &Tensor) -> Tensor {
    g.sum_axis(Axis(0)).insert_axis(Axis(0))
}

fn backward_op(op: &Primitive, x: &[&Tensor], y: &Tensor, g: &Tensor, need: &[bool]) -> Vec<Option<Tensor>> {
    use Primitive::*;
    let zip = |a: &Tensor, f: &dyn Fn(f64, f64) -> f64| -> Tensor {
        let mut out = g.clone();
        ndarray::Zip::from(&mut out).and(a).for_each(|o, &av| *o = f(*o, av));
        out
    };
    match op {
        Affine | MatMul => {
            let gx = need[0].then(|| g.dot(&x[1].t()));
            let gw = need[1].then(|| x[0].t().dot(g));
            let mut out = vec![gx, gw];
            if *op == Affine {
                out.push(need[2].then(|| col_sum(g)));
            }
            out
        }
        Add => vec![Some(g.clone()), Some(g.clone())],
        Sub => vec![Some(g.clone()), Some(-g)],
        Mul => vec![need[0].then(|| g * x[1]), need[1].then(|| g * x[0])],
        AddRow => vec![Some(g.clone()), need[1].then(|| col_sum(g))],
        MulRow => vec![need[0].then(|| g * x[1]), need[1].then(|| col_sum(&(g * x[0])))],
        Scale(c) => vec![Some(g * *c)],
        Shift(_) => vec![Some(g.clone())],
        Relu | HingeMax0 => vec![Some(zip(x[0], &|g, a| if a > 0.0 { g } else { 0.0 }))],
        Tanh => vec![Some(zip(y, &|g, t| g * (1.0 - t * t)))],
        Sigmoid => vec![Some(zip(y, &|g, s| g * s * (1.0 - s)))],
        Exp => vec![Some(zip(y, &|g, e| g * e))],
        Abs => vec![Some(zip(x[0], &|g, a| {
            if a > 0.0 {
                g
            } else if a < 0.0 {
                -g
            } else {
                0.0
            }
        }))],
        Square => vec![Some(zip(x[0], &|g, a| 2.0 * a * g))],
        Recip => vec![Some(zip(x[0], &|g, a| -g / (a * a)))],
        ClampMin(c) => {
            let c = *c;
            vec![Some(zip(x[0], &|g, a| if a > c { g } else { 0.0 }))]
        }
        Sum => vec![Some(Tensor::from_elem(x[0].dim(), g[[0, 0]]))],
        Mean => {
            let n = x[0].len() as f64;
            vec![Some(Tensor::from_elem(x[0].dim(), g[[0, 0]] / n))]
        }
        RowSum => {
            let (r, c) = x[0].dim();
            vec![Some(Array2::from_shape_fn((r, c), |(i, _)| g[[i, 0]]))]
        }
        L2Norm => {
            let n = y[[0, 0]];
            if n == 0.0 {
                vec![Some(Tensor::zeros(x[0].dim()))]
            } else {
                vec![Some(x[0] * (g[[0, 0]] / n))]
            }
        }
        RowL2Norm => {
            let (r, c) = x[0].dim();
            vec![Some(Array2::from_shape_fn((r, c), |(i, j)| {
                let n = y[[i, 0]];
                if n == 0.0 {
                    0.0
                } else {
                    g[[i, 0]] * x[0][[i, j]] / n
                }
            }))]
        }
        SelectCols(cols) => {
            let mut gx = Tensor::zeros(x[0].dim());
            for (k, &c) in cols.iter().enumerate() {
                let mut col = gx.column_mut(c);
                col += &g.column(k);
            }
            vec![Some(gx)]
        }
        ScatterCols { cols, .. } => vec![Some(g.select(Axis(1), cols))],
        ConcatCols => {
            let mut start = 0;
            x.iter()
                .zip(need)
                .map(|(xi, &n)| {
                    let w = xi.ncols();
                    let part = n.then(|| g.slice(ndarray::s![.., start..start + w]).to_owned());
                    start += w;
                    part
                })
                .collect()
        }
    }
}

macro_rules! unary {
    ($($name:ident => $prim:expr),* $(,)?) => {
        $(
            pub fn $name(self) -> Var<'t> {
                self.op($prim, &[])
            }
        )*
    };
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.dim()
    }

    /// Value of a `1×1` node.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.dim(), (1, 1), "item() on non-scalar");
        v[[0, 0]]
    }

    fn op(self, prim: Primitive, others: &[Var<'t>]) -> Var<'t> {
        let mut inputs = Vec::with_capacity(others.len() + 1);
        inputs.push(self);
        inputs.extend_from_slice(others);
        self.tape.apply(prim, &inputs).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn affine(self, w: Var<'t>, b: Var<'t>) -> Var<'t> {
        self.op(Primitive::Affine, &[w, b])
    }

    pub fn matmul(self, w: Var<'t>) -> Var<'t> {
        self.op(Primitive::MatMul, &[w])
    }

    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        self.op(Primitive::AddRow, &[row])
    }

    pub fn mul_row(self, row: Var<'t>) -> Var<'t> {
        self.op(Primitive::MulRow, &[row])
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.op(Primitive::Scale(c), &[])
    }

    pub fn shift(self, c: f64) -> Var<'t> {
        self.op(Primitive::Shift(c), &[])
    }

    pub fn clamp_min(self, c: f64) -> Var<'t> {
        self.op(Primitive::ClampMin(c), &[])
    }

    unary! {
        relu => Primitive::Relu,
        tanh => Primitive::Tanh,
        sigmoid => Primitive::Sigmoid,
        exp => Primitive::Exp,
        abs => Primitive::Abs,
        square => Primitive::Square,
        recip => Primitive::Recip,
        hinge => Primitive::HingeMax0,
        sum => Primitive::Sum,
        mean => Primitive::Mean,
        row_sum => Primitive::RowSum,
        l2norm => Primitive::L2Norm,
        row_l2norm => Primitive::RowL2Norm,
    }

    pub fn select_cols(self, cols: &[usize]) -> Var<'t> {
        self.op(Primitive::SelectCols(cols.to_vec()), &[])
    }

    pub fn col(self, c: usize) -> Var<'t> {
        self.select_cols(&[c])
    }

    pub fn scatter_cols(self, cols: &[usize], width: usize) -> Var<'t> {
        self.op(Primitive::ScatterCols { cols: cols.to_vec(), width }, &[])
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Var<'t> {
        let tape = parts.first().expect("concat of zero parts").tape;
        tape.apply(Primitive::ConcatCols, parts).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.op(Primitive::Add, &[rhs])
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.op(Primitive::Sub, &[rhs])
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.op(Primitive::Mul, &[rhs])
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}
