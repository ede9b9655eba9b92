//! Full pipeline on Loan or Adult: detector, engine, ADCAR and NaiveAR policies, flip reports.
//!
//! cargo run --release --example recourse_loan -- [loan|adult] [svdd|ae] [learned|exact] [seed] [json overrides]

use std::time::Instant;

use causal_recourse::data::{gen_adult, gen_loan, observational, LabelRule};
use causal_recourse::detect::{calibrate_threshold, detect, Detector, DetectorConfig, DetectorKind};
use causal_recourse::engine::{train_engine, EngineConfig};
use causal_recourse::eval::{NormBasis, RecourseSetup};
use causal_recourse::recourse::{EngineChoice, RecourseConfig};
use causal_recourse::{rng, scm};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dataset = args.first().map(String::as_str).unwrap_or("loan");
    let kind = DetectorKind::parse(args.get(1).map(String::as_str).unwrap_or("svdd")).ok_or("detector: ae | svdd")?;
    let engine_choice = match args.get(2).map(String::as_str).unwrap_or("learned") {
        "exact" => EngineChoice::Exact,
        _ => EngineChoice::Learned,
    };
    let seed: u64 = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(0);

    let (model, bundle, actionable) = match dataset {
        "adult" => (scm::adult(), gen_adult(10_000, 10_000, 1_000, seed)?, vec![1, 4, 5]),
        _ => (scm::loan(), gen_loan(10_000, 10_000, 1_000, seed)?, vec![3, 4, 5, 6]),
    };
    let rule = LabelRule::for_dataset(dataset).unwrap();

    let t = Instant::now();
    let (det, _) = Detector::train(&bundle.train.x, &bundle.mean, &bundle.std, &DetectorConfig::for_kind(kind, rng::sub_seed(seed, "detector")))?;
    let tau = calibrate_threshold(&det.scores(&bundle.train.x)?, 0.995)?;
    let hits = detect(&det.scores(&bundle.unlabeled.x)?, tau);
    let rows = bundle.unlabeled.select(&hits);
    println!("detector {} tau {tau:.4}: {} detected, {} true anomalies ({:.1?})", kind.name(), rows.len(), rows.anomalies(), t.elapsed());

    let engine = match engine_choice {
        EngineChoice::Learned => {
            let t = Instant::now();
            let obs = observational(&model, 10_000, rng::sub_seed(seed, "engine-data"))?;
            let cfg = EngineConfig { seed: rng::sub_seed(seed, "engine"), ..EngineConfig::default() };
            let (e, _) = train_engine(&obs.x, model.graph(), &bundle.mean, &bundle.std, &cfg)?;
            println!("engine trained ({:.1?})", t.elapsed());
            Some(e)
        }
        EngineChoice::Exact => None,
    };

    let setup = RecourseSetup {
        scm: &model,
        rule: &rule,
        detector: &det,
        tau,
        engine: engine.as_ref(),
        rows: &rows,
        actionable: &actionable,
        mean: &bundle.mean,
        std: &bundle.std,
        norm_basis: NormBasis::GroundTruth,
    };
    let mut cfg = serde_json::to_value(RecourseConfig { engine: engine_choice, seed, ..RecourseConfig::for_dataset(dataset) })?;
    if let Some(extra) = args.get(4) {
        let extra: serde_json::Value = serde_json::from_str(extra)?;
        for (k, v) in extra.as_object().ok_or("overrides must be a JSON object")? {
            cfg[k] = v.clone();
        }
    }
    let cfg: RecourseConfig = serde_json::from_value(cfg)?;
    for (name, c) in [("ADCAR", cfg.clone()), ("NaiveAR", cfg.naive())] {
        let t = Instant::now();
        let run = setup.run(&c)?;
        let first = run.log.first().unwrap();
        let last = run.log.last().unwrap();
        let r = run.report;
        println!(
            "{name:>8}: Yhat {:.3}  Y {:.3} (of {})  norm {:.3} ± {:.3}  loss {:.4} -> {:.4}  hinge {:.4} -> {:.4}  ({:.1?})",
            r.flip_ratio_detector,
            r.flip_ratio_ground_truth,
            r.n_true,
            r.norm_mean.unwrap_or(f64::NAN),
            r.norm_std.unwrap_or(f64::NAN),
            first.mean_loss,
            last.mean_loss,
            first.mean_hinge,
            last.mean_hinge,
            t.elapsed()
        );
    }
    Ok(())
}
