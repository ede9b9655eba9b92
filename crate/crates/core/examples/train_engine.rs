//! Trains the graph VAE on Loan and measures counterfactual fidelity against
//! the true structural equations.
//!
//! cargo run --release --example train_engine -- [epochs] [observational|train|pooled] [json overrides] [loan|adult]

use std::time::Instant;

use causal_recourse::data::{gen_adult, gen_loan, observational};
use causal_recourse::engine::{cf_fidelity, sample_thetas, train_engine, EngineConfig};
use causal_recourse::nn::standardize;
use causal_recourse::rng;
use causal_recourse::scm::{self, ExogenousRecord};
use ndarray::{concatenate, Axis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(40);
    let source = args.next().unwrap_or_else(|| "observational".into());
    let dataset = std::env::args().nth(4).unwrap_or_else(|| "loan".into());
    let (model, bundle, test, actionable) = match dataset.as_str() {
        "adult" => (scm::adult(), gen_adult(10_000, 10_000, 1_000, 0)?, gen_adult(1_000, 1_000, 200, 99)?, vec![1, 4, 5]),
        _ => (scm::loan(), gen_loan(10_000, 10_000, 1_000, 0)?, gen_loan(1_000, 1_000, 200, 99)?, vec![3, 4, 5, 6]),
    };
    let x = match source.as_str() {
        "observational" => observational(&model, 10_000, 0)?.x,
        "train" => bundle.train.x.clone(),
        "pooled" => concatenate(Axis(0), &[bundle.train.x.view(), bundle.unlabeled.x.view()])?,
        other => return Err(format!("unknown training source {other}").into()),
    };
    let mut config = serde_json::to_value(EngineConfig { epochs, ..EngineConfig::default() })?;
    if let Some(extra) = args.next() {
        let extra: serde_json::Value = serde_json::from_str(&extra)?;
        for (k, v) in extra.as_object().ok_or("overrides must be a JSON object")? {
            config[k] = v.clone();
        }
    }
    let config: EngineConfig = serde_json::from_value(config)?;

    let start = Instant::now();
    let (engine, report) = train_engine(&x, model.graph(), &bundle.mean, &bundle.std, &config)?;
    println!("trained on {} {source} rows in {:.1?}", x.nrows(), start.elapsed());
    for (e, l) in report.epoch_loss.iter().enumerate().filter(|(e, _)| e % 5 == 0 || *e + 1 == epochs) {
        println!("  epoch {e:>3}  loss {l:.4}");
    }
    println!("  recon mse per node {:.4?}", report.recon_mse);
    println!("  kl per node        {:.3?}", report.kl);

    let rows = &test.unlabeled;
    let zero = ndarray::Array2::zeros(rows.x.dim());
    let ident = engine.soft_intervention(&rows.x, &zero, &actionable)?;
    let diff = standardize(&ident, &bundle.mean, &bundle.std) - standardize(&rows.x, &bundle.mean, &bundle.std);
    println!("identity rms (standardized) {:.4}", diff.mapv(|v| v * v).mean().unwrap().sqrt());

    let mut r = rng::stream(7, "fidelity");
    let theta = sample_thetas(rows.x.nrows(), &bundle.std, &actionable, 0.5, &mut r);
    let fid = cf_fidelity(&model, &rows.x, &rows.u, &theta, |x, t| engine.soft_intervention(x, t, &actionable))?;
    println!("cf fidelity: mse {:.4}  sse {:.4}  over {} pairs", fid.mse, fid.sse, fid.n);

    let pred = engine.soft_intervention(&rows.x, &theta, &actionable)?;
    let mut per_node = vec![0.0; model.dim()];
    let mut errs = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let exact = model.counterfactual_exact(&rows.x.row(i).to_vec(), &ExogenousRecord(rows.u.row(i).to_vec()), &theta.row(i).to_vec())?;
        let mut e = 0.0;
        for (j, (a, b)) in exact.iter().zip(pred.row(i)).enumerate() {
            e += (a - b) * (a - b);
            per_node[j] += ((a - b) / bundle.std[j]).powi(2) / rows.len() as f64;
        }
        errs.push(e);
    }
    errs.sort_by(f64::total_cmp);
    println!("  standardized mse per node {per_node:.4?}");
    println!(
        "  per-pair error median {:.4}  p99 {:.4}  max {:.4}",
        errs[errs.len() / 2],
        errs[errs.len() * 99 / 100],
        errs[errs.len() - 1]
    );
    let anomalies: Vec<usize> = (0..rows.len()).filter(|&i| rows.labels[i] == 1).collect();
    let (xa, ua, ta) = (rows.x.select(Axis(0), &anomalies), rows.u.select(Axis(0), &anomalies), theta.select(Axis(0), &anomalies));
    let fa = cf_fidelity(&model, &xa, &ua, &ta, |x, t| engine.soft_intervention(x, t, &actionable))?;
    println!("anomalies only: mse {:.4}  sse {:.4}  over {} pairs", fa.mse, fa.sse, fa.n);
    let naive = cf_fidelity(&model, &rows.x, &rows.u, &theta, |x, t| Ok(x + t))?;
    println!("x + theta:   mse {:.4}  sse {:.4}", naive.mse, naive.sse);
    Ok(())
}
