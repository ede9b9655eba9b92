//! Trains the autoencoder and Deep SVDD detectors on both datasets and
//! reports detection quality on the unlabeled split.
//!
//! cargo run --release --example train_detectors

use std::time::Instant;

use causal_recourse::data::{gen_adult, gen_loan};
use causal_recourse::detect::{calibrate_threshold, detection_metrics, Detector, DetectorConfig, DetectorKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    for (name, bundle) in [("loan", gen_loan(10_000, 10_000, 1_000, seed)?), ("adult", gen_adult(10_000, 10_000, 1_000, seed)?)] {
        for kind in [DetectorKind::Ae, DetectorKind::Svdd] {
            let start = Instant::now();
            let cfg = DetectorConfig::for_kind(kind, seed);
            let (det, report) = Detector::train(&bundle.train.x, &bundle.mean, &bundle.std, &cfg)?;
            let tau = calibrate_threshold(&det.scores(&bundle.train.x)?, 0.995)?;
            let m = detection_metrics(&det.scores(&bundle.unlabeled.x)?, &bundle.unlabeled.labels, tau)?;
            println!(
                "{name:>5} {:>4}: f1 {:.3}  auroc {:.4}  auprc {:.4}  tau {:.4}  detected {:>4}  final loss {:.4}  ({:.1?})",
                kind.name(),
                m.f1,
                m.auroc,
                m.auprc,
                m.tau,
                m.n_detected,
                report.epoch_loss.last().unwrap(),
                start.elapsed()
            );
        }
    }
    Ok(())
}
