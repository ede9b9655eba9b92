//! Side-by-side ADCAR and NaiveAR actions for a few true Loan anomalies.
//!
//! cargo run --release --example case_study -- [seed]

use causal_recourse::data::{gen_loan, LabelRule};
use causal_recourse::detect::{calibrate_threshold, detect, Detector, DetectorConfig, DetectorKind};
use causal_recourse::eval::{case_report, CaseRow, NormBasis, RecourseSetup};
use causal_recourse::recourse::{EngineChoice, RecourseConfig};
use causal_recourse::scm::{self, ExogenousRecord};
use causal_recourse::rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let model = scm::loan();
    let rule = LabelRule::Loan;
    let actionable = [3, 4, 5, 6];
    let bundle = gen_loan(10_000, 10_000, 1_000, seed)?;
    let cfg = DetectorConfig::for_kind(DetectorKind::Svdd, rng::sub_seed(seed, "detector"));
    let (det, _) = Detector::train(&bundle.train.x, &bundle.mean, &bundle.std, &cfg)?;
    let tau = calibrate_threshold(&det.scores(&bundle.train.x)?, 0.995)?;
    let rows = bundle.unlabeled.select(&detect(&det.scores(&bundle.unlabeled.x)?, tau));

    let setup = RecourseSetup {
        scm: &model,
        rule: &rule,
        detector: &det,
        tau,
        engine: None,
        rows: &rows,
        actionable: &actionable,
        mean: &bundle.mean,
        std: &bundle.std,
        norm_basis: NormBasis::GroundTruth,
    };
    let cfg = RecourseConfig { engine: EngineChoice::Exact, seed, ..RecourseConfig::for_dataset("loan") };
    let adcar = setup.run(&cfg)?;
    let naive = setup.run(&cfg.naive())?;

    let names = model.graph().names().to_vec();
    for i in (0..rows.len()).filter(|&i| rows.labels[i] == 1).take(3) {
        let x = rows.x.row(i).to_vec();
        let u = ExogenousRecord(rows.u.row(i).to_vec());
        let mut table = vec![CaseRow::point("", "x", &x, &rule)];
        for (name, run) in [("ADCAR", &adcar), ("NaiveAR", &naive)] {
            let theta = run.theta.row(i).to_vec();
            table.push(CaseRow::action(name, "theta", &theta, &actionable));
            table.push(CaseRow::point(name, "x(theta)", &model.counterfactual_exact(&x, &u, &theta)?, &rule));
        }
        println!("{}", case_report(&names, rule.value_name(), &table));
    }
    Ok(())
}
