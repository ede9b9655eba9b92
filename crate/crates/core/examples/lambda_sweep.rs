//! Sweeps the recourse weight λ on Loan with the exact engine and reports
//! how action cost and flip ratios move.
//!
//! cargo run --release --example lambda_sweep -- [svdd|ae] [seed]

use causal_recourse::data::{gen_loan, LabelRule};
use causal_recourse::detect::{calibrate_threshold, detect, Detector, DetectorConfig, DetectorKind};
use causal_recourse::eval::{default_values, run_sweep, spearman, NormBasis, RecourseSetup, SweepParam};
use causal_recourse::recourse::{EngineChoice, RecourseConfig};
use causal_recourse::{rng, scm};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = DetectorKind::parse(args.first().map(String::as_str).unwrap_or("svdd")).ok_or("detector: ae | svdd")?;
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0);

    let model = scm::loan();
    let bundle = gen_loan(10_000, 10_000, 1_000, seed)?;
    let cfg = DetectorConfig::for_kind(kind, rng::sub_seed(seed, "detector"));
    let (det, _) = Detector::train(&bundle.train.x, &bundle.mean, &bundle.std, &cfg)?;
    let tau = calibrate_threshold(&det.scores(&bundle.train.x)?, 0.995)?;
    let rows = bundle.unlabeled.select(&detect(&det.scores(&bundle.unlabeled.x)?, tau));

    let setup = RecourseSetup {
        scm: &model,
        rule: &LabelRule::Loan,
        detector: &det,
        tau,
        engine: None,
        rows: &rows,
        actionable: &[3, 4, 5, 6],
        mean: &bundle.mean,
        std: &bundle.std,
        norm_basis: NormBasis::Detector,
    };
    let base = RecourseConfig { engine: EngineChoice::Exact, seed, ..RecourseConfig::for_dataset("loan") };
    let grid = run_sweep(&setup, SweepParam::Lambda, &default_values(SweepParam::Lambda, kind), &base)?;
    let (mut lambdas, mut norms) = (Vec::new(), Vec::new());
    for (v, r) in grid.ok() {
        println!("lambda {v:>8.0e}: Yhat {:.3}  Y {:.3}  norm {:.3}", r.flip_ratio_detector, r.flip_ratio_ground_truth, r.norm_mean.unwrap_or(f64::NAN));
        if let Some(n) = r.norm_mean {
            lambdas.push(v);
            norms.push(n);
        }
    }
    if let Some(rho) = spearman(&lambdas, &norms) {
        println!("spearman(lambda, norm) = {rho:.3}");
    }
    Ok(())
}
