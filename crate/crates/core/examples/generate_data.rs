//! Draws the Loan and Adult datasets and prints summary statistics.
//!
//! cargo run --example generate_data -- [out_dir]

use std::time::Instant;

use causal_recourse::data::{generate, write_bundle, Counts, LabelRule};
use causal_recourse::scm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1);
    for name in ["loan", "adult"] {
        let model = scm::builtin(name).expect("built-in");
        let rule = LabelRule::for_dataset(name).expect("built-in");
        let start = Instant::now();
        let (bundle, report) = generate(&model, &rule, Counts::new(10_000, 10_000, 1_000), 0)?;
        println!(
            "{name}: {} train, {} unlabeled ({} anomalous) from {} draws in {:.2?}",
            bundle.train.len(),
            bundle.unlabeled.len(),
            bundle.unlabeled.anomalies(),
            report.draws,
            start.elapsed()
        );
        println!("  in band {}, surplus {}, non-finite redraws {}", report.in_band, report.surplus, report.non_finite);
        for (j, n) in bundle.names.iter().enumerate() {
            println!("  {n:>2}  mean {:>10.4}  std {:>10.4}", bundle.mean[j], bundle.std[j]);
        }
        if let Some(dir) = &out {
            let path = std::path::Path::new(dir).join(name);
            write_bundle(&bundle, &path, rule.value_name())?;
            println!("  written to {}", path.display());
        }
    }
    Ok(())
}
