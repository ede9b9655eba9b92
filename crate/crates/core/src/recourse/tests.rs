use std::sync::OnceLock;

use rand::Rng as _;

use super::*;
use crate::data::column_stats;
use crate::detect::DetectorConfig;
use crate::scm::{CausalGraph, Mechanism, NoiseSpec, Term};

struct Fixture {
    scm: Scm,
    x: Tensor,
    u: Tensor,
    mean: Vec<f64>,
    std: Vec<f64>,
    det: Detector,
    tau: f64,
}

fn chain3() -> Scm {
    let g = CausalGraph::from_named(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
    let lin = |p: usize, w: f64| Term::Linear { weights: [(p, w)].into_iter().collect() };
    let ms = vec![
        Mechanism::catalog(0, vec![], NoiseSpec::Normal { mean: 0.0, std: 1.0 }),
        Mechanism::catalog(1, vec![lin(0, 1.5)], NoiseSpec::Normal { mean: 0.0, std: 0.5 }),
        Mechanism::catalog(2, vec![lin(1, -1.0)], NoiseSpec::Normal { mean: 0.0, std: 0.5 }),
    ];
    Scm::new(g, ms).unwrap()
}

fn to_tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let scm = chain3();
        let train = to_tensor(&scm.sample(2000, 1).unwrap().x);
        let (mean, std) = column_stats(&train);
        let cfg = DetectorConfig { epochs: 20, ..DetectorConfig::ae(0) };
        let (det, _) = Detector::train(&train, &mean, &std, &cfg).unwrap();
        let tau = crate::detect::calibrate_threshold(&det.scores(&train).unwrap(), 0.9).unwrap();
        // Shift the root so rows are anomalous and recourse has work to do.
        let s = scm.sample(64, 2).unwrap();
        let mut u = to_tensor(&s.u);
        u.column_mut(0).mapv_inplace(|v| v + 3.0);
        let x = to_tensor(&u.rows().into_iter().map(|r| scm.simulate(&r.to_vec())).collect::<Vec<_>>());
        Fixture { scm, x, u, mean, std, det, tau }
    })
}

fn cost(f: &Fixture) -> CostVector {
    CostVector::new(f.std.clone(), &[0, 1, 2]).unwrap()
}

#[test]
fn hand_computed_loss() {
    let c = CostVector(vec![1.0, 1.0]);
    // g = 5, ατ = 3: hinge 2; cost 0.1·‖(3, 4)‖ = 0.5
    let l = recourse_loss(5.0, 6.0, 0.5, 0.1, &c, &[3.0, 4.0]);
    assert!((l - 2.5).abs() < 1e-12);
    assert_eq!(recourse_loss(2.0, 6.0, 0.5, 0.1, &c, &[0.0, 0.0]), 0.0);
}

proptest::proptest! {
    #[test]
    fn doubling_cost_doubles_cost_term(
        c in proptest::collection::vec(0.01f64..10.0, 4),
        theta in proptest::collection::vec(-50.0f64..50.0, 4),
    ) {
        let one = CostVector(c.clone()).norm(&theta);
        let two = CostVector(c.iter().map(|v| 2.0 * v).collect()).norm(&theta);
        proptest::prop_assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn detector_losses_agree_with_scalar_loss(
        row in proptest::collection::vec(-5.0f64..5.0, 3),
        theta in proptest::collection::vec(-2.0f64..2.0, 3),
        lambda in 0.0f64..1.0,
    ) {
        let f = fixture();
        let c = cost(f);
        let want = recourse_loss(f.det.score(&row).unwrap(), f.tau, 0.5, lambda, &c, &theta);
        proptest::prop_assert_eq!(loss_ae(&f.det, &row, f.tau, 0.5, lambda, &c, &theta).unwrap(), want);
    }
}

#[test]
fn naive_counterfactual_adds_in_place() {
    let x = crate::diff::row(&[1.0, 2.0]);
    let t = crate::diff::row(&[0.0, 3.0]);
    assert_eq!(naive_counterfactual(&x, &t), crate::diff::row(&[1.0, 5.0]));
    let viaenum = CfModel::Naive.counterfactual(&x, &t, &[1]).unwrap();
    assert_eq!(viaenum, crate::diff::row(&[1.0, 5.0]));
}

#[test]
fn exact_counterfactual_propagates() {
    let f = fixture();
    let cf = CfModel::Exact { scm: &f.scm, u: &f.u };
    let mut theta = Tensor::zeros(f.x.dim());
    theta.column_mut(0).fill(1.0);
    let out = cf.counterfactual(&f.x, &theta, &[0, 1, 2]).unwrap();
    for i in 0..f.x.nrows() {
        assert!((out[[i, 0]] - f.x[[i, 0]] - 1.0).abs() < 1e-12);
        assert!((out[[i, 1]] - f.x[[i, 1]] - 1.5).abs() < 1e-12);
        assert!((out[[i, 2]] - f.x[[i, 2]] + 1.5).abs() < 1e-12);
    }
}

#[test]
fn loss_helpers_check_detector_kind() {
    let f = fixture();
    let c = cost(f);
    let row = f.x.row(0).to_vec();
    assert!(loss_ae(&f.det, &row, f.tau, 0.5, 1e-3, &c, &[0.0; 3]).is_ok());
    assert!(matches!(loss_svdd(&f.det, &row, f.tau, 0.5, 1e-3, &c, &[0.0; 3]), Err(RecourseError::DetectorKind { .. })));
}

#[test]
fn cost_vector_rejects_non_positive_weights() {
    assert!(CostVector::new(vec![1.0, 0.0], &[1]).is_err());
    assert!(CostVector::new(vec![1.0, 0.0], &[0]).is_ok());
}

#[test]
fn fresh_policy_proposes_no_action() {
    let f = fixture();
    let p = ActionPolicy::new(&f.mean, &f.std, &[0, 2], &[8, 8], 3).unwrap();
    assert!(p.predict_action(&f.x).iter().all(|&v| v == 0.0));
}

#[test]
fn actions_are_masked_to_the_actionable_set() {
    let f = fixture();
    let mut p = ActionPolicy::new(&f.mean, &f.std, &[0, 2], &[8, 8], 3).unwrap();
    let mut r = rng::stream(5, "test");
    for q in p.mlp.params.iter_mut() {
        q.value.mapv_inplace(|_| r.random_range(-0.5..0.5));
    }
    let theta = p.predict_action(&f.x);
    assert!(theta.column(1).iter().all(|&v| v == 0.0));
    assert!(theta.column(0).iter().any(|&v| v != 0.0));
    let tape = Tape::new();
    let bound = p.mlp.params.bind_frozen(&tape);
    assert_eq!(*p.forward_var(&bound, tape.constant(f.x.clone())).value(), theta);
}

fn batch_loss(p: &ActionPolicy, obj: &Objective, x: &Tensor, rows: &[usize]) -> f64 {
    let theta = p.predict_action(x);
    obj.terms(x, rows, &theta, p.actionable()).unwrap().iter().map(|(h, c)| h + obj.lambda * c).sum::<f64>() / x.nrows() as f64
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let f = fixture();
    let c = cost(f);
    let obj = Objective { detector: &f.det, tau: f.tau, cf: CfModel::Exact { scm: &f.scm, u: &f.u }, cost: &c, lambda: 0.05, alpha: 0.5 };
    let mut p = ActionPolicy::new(&f.mean, &f.std, &[0, 1, 2], &[6], 4).unwrap();
    let mut r = rng::stream(9, "test");
    for q in p.mlp.params.iter_mut() {
        q.value.mapv_inplace(|v| v + r.random_range(-0.3..0.3));
    }
    let rows: Vec<usize> = (0..f.x.nrows()).collect();
    accumulate_gradient(&mut p, &obj, &f.x, &rows).unwrap();
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..p.mlp.params.len() {
        let n = p.mlp.params.get(k).value.len();
        for e in (0..n).step_by(3) {
            let analytic = p.mlp.params.get(k).grad.as_slice().unwrap()[e];
            let mut q = p.clone();
            q.mlp.params.get_mut(k).value.as_slice_mut().unwrap()[e] += eps;
            let up = batch_loss(&q, &obj, &f.x, &rows);
            q.mlp.params.get_mut(k).value.as_slice_mut().unwrap()[e] -= 2.0 * eps;
            let down = batch_loss(&q, &obj, &f.x, &rows);
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0));
        }
    }
    assert!(worst <= 1e-3, "max relative error {worst}");
}

#[test]
fn huge_lambda_keeps_actions_near_zero() {
    let f = fixture();
    let c = cost(f);
    let cfg = RecourseConfig { lambda: 1e6, epochs: 5, hidden: vec![16], engine: EngineChoice::Exact, ..RecourseConfig::default() };
    let mut p = ActionPolicy::new(&f.mean, &f.std, &[0, 1, 2], &cfg.hidden, cfg.seed).unwrap();
    train_policy(&mut p, &f.x, &f.det, f.tau, CfModel::Exact { scm: &f.scm, u: &f.u }, &c, &cfg).unwrap();
    let theta = p.predict_action(&f.x);
    assert!(theta.rows().into_iter().all(|t| t.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.01));
}

#[test]
fn loss_decreases_early() {
    let f = fixture();
    let c = cost(f);
    let cfg = RecourseConfig { epochs: 5, hidden: vec![32, 32], lr: 1e-2, engine: EngineChoice::Exact, ..RecourseConfig::default() };
    let mut p = ActionPolicy::new(&f.mean, &f.std, &[0, 1, 2], &cfg.hidden, cfg.seed).unwrap();
    let log = train_policy(&mut p, &f.x, &f.det, f.tau, CfModel::Exact { scm: &f.scm, u: &f.u }, &c, &cfg).unwrap();
    assert_eq!(log.len(), 5);
    assert!(log[0].mean_hinge > 0.0);
    for w in log.windows(2) {
        assert!(w[1].mean_loss <= w[0].mean_loss + 1e-9, "{log:?}");
    }
}

#[test]
fn naive_twin_differs_only_in_baseline() {
    let cfg = RecourseConfig::for_dataset("adult");
    assert_eq!(cfg.alpha, 0.3);
    let n = cfg.naive();
    assert_eq!(n.baseline, Baseline::Naive);
    assert_eq!(RecourseConfig { baseline: Baseline::Adcar, ..n }, cfg);
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        RecourseConfig { lambda: -1.0, ..RecourseConfig::default() },
        RecourseConfig { alpha: 0.0, ..RecourseConfig::default() },
        RecourseConfig { lr: 0.0, ..RecourseConfig::default() },
    ] {
        assert!(cfg.validate().is_err());
    }
}

#[test]
fn policy_checkpoint_round_trip() {
    let f = fixture();
    let mut p = ActionPolicy::new(&f.mean, &f.std, &[0, 2], &[8], 3).unwrap();
    p.mlp.params.get_mut(0).value.mapv_inplace(|v| v * 1.1 + 0.01);
    let last = p.mlp.params.len() - 2;
    p.mlp.params.get_mut(last).value.fill(0.3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    p.save(&path).unwrap();
    let q = ActionPolicy::load(&path).unwrap();
    assert_eq!(p.predict_action(&f.x), q.predict_action(&f.x));
}
