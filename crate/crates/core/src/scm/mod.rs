//! Structural causal models: graphs, mechanisms, sampling and counterfactuals.

mod doc;
mod graph;
mod mechanism;
mod model;
mod num;

pub use doc::{CompareOp, LabelDoc, NodeDoc, Predicate, ScmDoc};
pub use graph::CausalGraph;
pub use mechanism::{
    adult_marital, adult_occupation, adult_relationship, adult_work_status, mode, Builtin, Mechanism, MechanismKind,
    NoiseSpec, Term, LOAN_E_DENOM_FLOOR,
};
pub use model::{ExogenousRecord, Intervention, Sample, Scm};
pub use num::{lift_rows, Num};

#[derive(Debug, thiserror::Error)]
pub enum ScmError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("graph has a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("mechanism of {0} is not additive in its noise and has no inverse")]
    NotAdditive(String),
    #[error("factual row disagrees with its noise record ({0})")]
    Inconsistent(String),
    #[error("non-finite values: {0}")]
    NonFinite(String),
}

pub const LOAN_NAMES: [&str; 7] = ["G", "A", "E", "L", "D", "I", "S"];
pub const ADULT_NAMES: [&str; 10] = ["R", "A", "N", "S", "E", "H", "W", "M", "O", "L"];

/// Loan-approval model: gender, age, education, loan amount, duration, income, savings.
pub fn loan() -> Scm {
    Scm::from_builtins(&LOAN_NAMES, &Builtin::all()[..7]).expect("built-in loan model is valid")
}

/// Adult-income model: race, age, native country, sex, education, hours,
/// work status, marital status, occupation, relationship.
pub fn adult() -> Scm {
    Scm::from_builtins(&ADULT_NAMES, &Builtin::all()[7..]).expect("built-in adult model is valid")
}

/// Model by name, `"loan"` or `"adult"`.
pub fn builtin(name: &str) -> Option<Scm> {
    match name {
        "loan" => Some(loan()),
        "adult" => Some(adult()),
        _ => None,
    }
}
