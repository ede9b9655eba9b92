use proptest::prelude::*;

use super::*;

fn scalar_grad(f: impl for<'t> Fn(Var<'t>) -> Var<'t>, x: Tensor) -> (f64, Tensor) {
    let tape = Tape::new();
    let v = tape.var(x);
    let y = f(v);
    let g = tape.backward(y).unwrap();
    (y.item(), g.get_or_zeros(v))
}

#[test]
fn forward_examples() {
    let tape = Tape::new();
    assert_eq!(tape.scalar(0.0).sigmoid().item(), 0.5);
    assert_eq!(tape.scalar(-1.5).hinge().item(), 0.0);
    assert_eq!(tape.constant(row(&[3.0, 4.0])).l2norm().item(), 5.0);
}

#[test]
fn backward_examples() {
    let (_, g) = scalar_grad(|x| x * x, row(&[3.0]));
    assert_eq!(g[[0, 0]], 6.0);
    let (_, g) = scalar_grad(|x| x.sigmoid(), row(&[0.0]));
    assert_eq!(g[[0, 0]], 0.25);
    let (_, g) = scalar_grad(|x| x.l2norm(), row(&[3.0, 4.0]));
    assert!((g[[0, 0]] - 0.6).abs() < 1e-15 && (g[[0, 1]] - 0.8).abs() < 1e-15);
}

#[test]
fn grad_check_examples() {
    assert!(grad_check(|_, x| x * x, &row(&[3.0]), 1e-5).unwrap() < 1e-6);
    assert_eq!(grad_check(|t, _| t.scalar(2.0), &row(&[1.0, 2.0]), 1e-5).unwrap(), 0.0);
    assert!(grad_check(|_, x| x.tanh(), &row(&[0.7]), 1e-5).unwrap() < 1e-4);
    assert!(matches!(grad_check(|_, x| x.recip(), &row(&[0.0]), 1e-5), Err(DiffError::NonFinite)));
    assert!(matches!(grad_check(|_, x| x, &row(&[1.0]), 0.0), Err(DiffError::BadEpsilon(_))));
}

#[test]
fn hinge_subgradient_at_zero_is_zero() {
    let (_, g) = scalar_grad(|x| x.hinge().sum(), row(&[0.0, 1e-300, -1e-300]));
    assert_eq!(g, row(&[0.0, 1.0, 0.0]));
}

#[test]
fn shape_errors_name_the_op() {
    let tape = Tape::new();
    let a = tape.var(Tensor::zeros((2, 3)));
    let b = tape.var(Tensor::zeros((3, 2)));
    let err = tape.apply(Primitive::Add, &[a, b]).unwrap_err();
    assert_eq!(err, DiffError::ShapeMismatch { op: "add", shapes: vec![(2, 3), (3, 2)] });
    assert!(err.to_string().contains("add"));
    assert!(matches!(tape.backward(a), Err(DiffError::NotScalar { shape: (2, 3) })));
    assert!(matches!(tensor(2, 2, vec![1.0]), Err(DiffError::BadLength { .. })));
}

#[test]
fn constants_receive_no_gradient() {
    let tape = Tape::new();
    let c = tape.constant(row(&[1.0, 2.0]));
    let v = tape.var(row(&[3.0, 4.0]));
    let g = tape.backward((c * v).sum()).unwrap();
    assert!(g.get(c).is_none());
    assert_eq!(g.get(v).unwrap(), &row(&[1.0, 2.0]));
}

#[test]
fn independent_subgraphs_do_not_interact() {
    let (a0, b0) = (row(&[0.3, -1.2]), row(&[2.0, 0.5]));
    fn f(x: Var<'_>) -> Var<'_> {
        x.tanh().square().sum()
    }
    fn h(x: Var<'_>) -> Var<'_> {
        x.exp().l2norm()
    }
    let (_, ga) = scalar_grad(f, a0.clone());
    let (_, gb) = scalar_grad(h, b0.clone());
    let tape = Tape::new();
    let (a, b) = (tape.var(a0), tape.var(b0));
    let g = tape.backward(f(a) + h(b)).unwrap();
    assert_eq!(g.get_or_zeros(a), ga);
    assert_eq!(g.get_or_zeros(b), gb);
}

#[test]
fn backward_with_seed_scales_the_vjp() {
    let tape = Tape::new();
    let x = tape.var(row(&[1.0, 2.0]));
    let y = x.square();
    let g = tape.backward_with_seed(y, row(&[3.0, -1.0]));
    assert_eq!(g.get_or_zeros(x), row(&[6.0, -4.0]));
}

#[test]
fn sgd_steps_trainable_parameters_and_zeroes_grads() {
    let mut ps = ParamStore::new();
    let w = ps.add("w", row(&[1.0, -2.0]));
    ps.add("frozen", row(&[5.0]));
    ps.get_mut(1).trainable = false;
    let tape = Tape::new();
    let bound = ps.bind(&tape);
    let loss = bound[0].square().sum() + (bound[1] * bound[1]).sum();
    let g = tape.backward(loss).unwrap();
    ps.accumulate(&g, &bound);
    assert_eq!(ps.get(w).grad, row(&[2.0, -4.0]));
    assert_eq!(ps.get(1).grad, row(&[0.0]));
    Sgd::new(0.25).step(&mut ps);
    assert_eq!(ps.get(w).value, row(&[0.5, -1.0]));
    assert_eq!(ps.get(1).value, row(&[5.0]));
    assert!(ps.iter_mut().all(|p| p.grad.iter().all(|&g| g == 0.0)));
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut ps = ParamStore::new();
    ps.add("w", row(&[1.0, 1.0]));
    ps.get_mut(0).grad = row(&[0.5, -3.0]);
    Adam::new(0.1).step(&mut ps);
    let v = &ps.get(0).value;
    assert!((v[[0, 0]] - 0.9).abs() < 1e-6 && (v[[0, 1]] - 1.1).abs() < 1e-6);
}

fn away_from_zero() -> impl Strategy<Value = f64> {
    (-3.0f64..3.0).prop_filter("kink", |v| v.abs() > 1e-3)
}

fn point(n: usize) -> impl Strategy<Value = Tensor> {
    proptest::collection::vec(away_from_zero(), n).prop_map(move |v| tensor(1, n, v).unwrap())
}

fn weights(n: usize) -> Tensor {
    Tensor::from_shape_fn((1, n), |(_, j)| 0.5 + 0.3 * j as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn elementwise_primitives_match_finite_differences(x in point(4)) {
        let w = weights(4);
        let cases: [(&str, fn(Var<'_>) -> Var<'_>); 10] = [
            ("relu", |v| v.relu()),
            ("tanh", |v| v.tanh()),
            ("sigmoid", |v| v.sigmoid()),
            ("exp", |v| v.exp()),
            ("abs", |v| v.abs()),
            ("square", |v| v.square()),
            ("hinge", |v| v.hinge()),
            ("scale", |v| v.scale(-2.5)),
            ("shift", |v| v.shift(1.5).square()),
            ("clamp_min", |v| v.clamp_min(0.0)),
        ];
        for (name, f) in cases {
            let err = grad_check(|t, v| f(v).mul_row(t.constant(w.clone())).sum(), &x, 1e-6).unwrap();
            prop_assert!(err <= 1e-4, "{name}: {err}");
        }
        let recip = x.mapv(|v| v.signum() * (v.abs() + 0.5));
        prop_assert!(grad_check(|_, v| v.recip().sum(), &recip, 1e-6).unwrap() <= 1e-4);
    }

    #[test]
    fn structural_primitives_match_finite_differences(x in point(6)) {
        let x = x.into_shape_with_order((2, 3)).unwrap();
        let w = Tensor::from_shape_fn((3, 2), |(i, j)| 0.4 * i as f64 - 0.3 * j as f64 + 0.1);
        let b = row(&[0.2, -0.7]);
        let checks: Vec<f64> = vec![
            grad_check(|t, v| v.affine(t.constant(w.clone()), t.constant(b.clone())).tanh().sum(), &x, 1e-6).unwrap(),
            grad_check(|t, v| t.constant(x.clone()).affine(v, t.constant(b.clone())).square().sum(), &w, 1e-6).unwrap(),
            grad_check(|t, v| t.constant(x.clone()).affine(t.constant(w.clone()), v).sigmoid().sum(), &b, 1e-6).unwrap(),
            grad_check(|t, v| v.matmul(t.constant(w.clone())).square().mean(), &x, 1e-6).unwrap(),
            grad_check(|t, v| (v * t.constant(x.clone()) - v.tanh()).sum(), &x, 1e-6).unwrap(),
            grad_check(|t, v| v.add_row(t.constant(row(&[1.0, 2.0, 3.0]))).square().sum(), &x, 1e-6).unwrap(),
            grad_check(|t, v| v.mul_row(t.constant(row(&[1.0, -2.0, 3.0]))).square().sum(), &x, 1e-6).unwrap(),
            grad_check(|t, v| t.constant(x.clone()).mul_row(v).square().sum(), &row(&[0.5, -1.0, 2.0]), 1e-6).unwrap(),
            grad_check(|_, v| v.row_sum().square().sum(), &x, 1e-6).unwrap(),
            grad_check(|_, v| v.l2norm(), &x, 1e-6).unwrap(),
            grad_check(|_, v| v.row_l2norm().square().sum() + v.row_l2norm().sum(), &x, 1e-6).unwrap(),
            grad_check(|_, v| v.select_cols(&[2, 0]).square().sum(), &x, 1e-6).unwrap(),
            grad_check(|_, v| v.scatter_cols(&[3, 1, 0], 5).exp().sum(), &x, 1e-6).unwrap(),
            grad_check(|_, v| Var::concat_cols(&[v.col(1), v, v.tanh()]).square().sum(), &x, 1e-6).unwrap(),
        ];
        for (k, err) in checks.into_iter().enumerate() {
            prop_assert!(err <= 1e-4, "check {k}: {err}");
        }
    }

    #[test]
    fn tape_ids_increase_and_backward_visits_once(n in 1usize..20) {
        let tape = Tape::new();
        let x = tape.var(row(&[0.5]));
        let mut y = x;
        for _ in 0..n {
            let next = y + x;
            prop_assert!(next.id() > y.id());
            y = next;
        }
        let g = tape.backward(y.sum()).unwrap();
        prop_assert_eq!(g.get_or_zeros(x)[[0, 0]], (n + 1) as f64);
    }
}
