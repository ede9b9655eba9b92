//! Causal algorithmic recourse for anomaly detectors.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod engine;
pub mod eval;
pub mod detect;
pub mod diff;
pub mod nn;
pub mod recourse;
pub mod rng;
pub mod scm;
