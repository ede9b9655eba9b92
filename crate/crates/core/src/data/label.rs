use std::collections::BTreeMap;

use crate::diff::sigmoid;
use crate::scm::{CompareOp, LabelDoc, Predicate, ScmError, Term};

/// Probability of loan approval, `σ(0.3·(−L − D + I + S + I·S))`.
pub fn loan_label(x: &[f64]) -> f64 {
    let (l, d, i, s) = (x[3], x[4], x[5], x[6]);
    sigmoid(0.3 * (-l - d + i + s + i * s))
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn code(v: f64, k: f64) -> bool {
    v.round() == k
}

/// Yearly income in dollars for an Adult row.
pub fn adult_income(x: &[f64]) -> f64 {
    let (r, a, n, s, e, h, w, m, o, l) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9]);
    20_000.0 * ind(r > 1.5)
        + 10_000.0 * ind(r < 1.5)
        + 2_816.0 * ind(a >= 30.0)
        + 9_488.0 * ind(e >= 10.0)
        + 5_000.0 * ind(code(o, 1.0))
        + 15_000.0 * ind(code(o, 2.0))
        + 5_000.0 * ind(code(w, 0.0))
        + 7_000.0 * ind(code(w, 1.0))
        + 1_000.0 * ind(code(m, 0.0))
        + 4_000.0 * ind(code(m, 1.0))
        - 2_000.0 * ind(code(m, 2.0))
        + 15_000.0 * ind(h > 45.0)
        + 10_000.0 * ind(n >= 2.0)
        + 4_000.0 * ind(code(s, 1.0))
        + 3_000.0 * ind(l <= 1.0)
}

/// Label function with its normal and anomaly predicates.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelRule {
    /// Normal when `Y > 0.9`, anomalous when `Y < 0.1`.
    Loan,
    /// Normal when income ≤ 50,000, anomalous above.
    Adult,
    Custom { terms: Vec<Term<usize>>, normal: Predicate, anomaly: Predicate },
}

impl LabelRule {
    pub fn for_dataset(name: &str) -> Option<Self> {
        match name {
            "loan" => Some(LabelRule::Loan),
            "adult" => Some(LabelRule::Adult),
            _ => None,
        }
    }

    /// Builds a rule from a JSON label description over the given node names.
    pub fn from_doc(doc: &LabelDoc, names: &[String]) -> Result<Self, ScmError> {
        if let Some(b) = &doc.builtin {
            return Self::for_dataset(b).ok_or_else(|| ScmError::Invalid(format!("unknown label rule {b}")));
        }
        let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let lookup = |n: &String| index.get(n.as_str()).copied().ok_or_else(|| ScmError::UnknownNode(n.clone()));
        let terms = doc.terms.iter().map(|t| t.map_keys(&lookup)).collect::<Result<Vec<_>, _>>()?;
        let (normal, anomaly) = match (doc.normal, doc.anomaly) {
            (Some(n), Some(a)) => (n, a),
            _ => return Err(ScmError::Invalid("label needs both normal and anomaly predicates".into())),
        };
        if overlap(&normal, &anomaly) {
            return Err(ScmError::Invalid("normal and anomaly predicates overlap".into()));
        }
        Ok(LabelRule::Custom { terms, normal, anomaly })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            LabelRule::Loan => loan_label(x),
            LabelRule::Adult => adult_income(x),
            LabelRule::Custom { terms, .. } => terms.iter().map(|t| t.eval(x, &0.0)).sum(),
        }
    }

    pub fn is_normal_value(&self, v: f64) -> bool {
        match self {
            LabelRule::Loan => v > 0.9,
            LabelRule::Adult => v <= 50_000.0,
            LabelRule::Custom { normal, .. } => normal.holds(v),
        }
    }

    pub fn is_anomaly_value(&self, v: f64) -> bool {
        match self {
            LabelRule::Loan => v < 0.1,
            LabelRule::Adult => v > 50_000.0,
            LabelRule::Custom { anomaly, .. } => anomaly.holds(v),
        }
    }

    pub fn is_normal(&self, x: &[f64]) -> bool {
        self.is_normal_value(self.value(x))
    }

    pub fn is_anomaly(&self, x: &[f64]) -> bool {
        self.is_anomaly_value(self.value(x))
    }

    /// Column header for raw label values.
    pub fn value_name(&self) -> &'static str {
        match self {
            LabelRule::Loan => "Y",
            LabelRule::Adult => "I",
            LabelRule::Custom { .. } => "label_value",
        }
    }
}

/// Whether two threshold predicates can hold for the same value.
fn overlap(a: &Predicate, b: &Predicate) -> bool {
    let lower = |p: &Predicate| matches!(p.op, CompareOp::Gt | CompareOp::Ge);
    match (lower(a), lower(b)) {
        (true, true) | (false, false) => true,
        (true, false) => a.value < b.value || (a.value == b.value && a.holds(a.value) && b.holds(b.value)),
        (false, true) => overlap(b, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loan_case_study_probabilities() {
        let base = [0.0, 7.7065, -0.0707, 6.8254, 7.9987, -1.8513, -3.5468];
        assert!((loan_label(&base) - 0.0164).abs() < 1e-3);
        let mut adcar = base;
        adcar[3..].copy_from_slice(&[6.0408, 5.1799, 5.1546, 10.1966]);
        assert!((loan_label(&adcar) - 1.0).abs() < 1e-3);
        let mut naive = base;
        naive[3..].copy_from_slice(&[-2.1294, -13.9860, -3.8308, 6.4393]);
        assert!((loan_label(&naive) - 0.1439).abs() < 1e-3);
    }

    #[test]
    fn adult_case_study_incomes() {
        let row = |a: f64, e: f64, h: f64| [1.0, a, 3.0, 1.0, e, h, 3.0, 0.0, 2.0, 2.0];
        assert_eq!(adult_income(&row(77.7101, 21.9036, 0.0)), 52_304.0);
        assert_eq!(adult_income(&row(25.0257, -5.7988, 45.0100)), 55_000.0);
        assert_eq!(adult_income(&row(89.6108, 6.1346, 0.0)), 42_816.0);
    }

    #[test]
    fn custom_predicates_must_be_disjoint() {
        let p = |op, value| Predicate { op, value };
        assert!(overlap(&p(CompareOp::Gt, 1.0), &p(CompareOp::Ge, 5.0)));
        assert!(overlap(&p(CompareOp::Ge, 1.0), &p(CompareOp::Le, 1.0)));
        assert!(!overlap(&p(CompareOp::Gt, 1.0), &p(CompareOp::Le, 1.0)));
        assert!(!overlap(&p(CompareOp::Lt, 0.1), &p(CompareOp::Gt, 0.9)));
        assert!(overlap(&p(CompareOp::Lt, 0.9), &p(CompareOp::Gt, 0.1)));
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn normal_and_anomaly_never_both_hold(x in proptest::collection::vec(-50.0f64..100.0, 10)) {
            for rule in [LabelRule::Loan, LabelRule::Adult] {
                prop_assert!(!(rule.is_normal(&x) && rule.is_anomaly(&x)));
            }
        }

        #[test]
        fn income_is_constant_between_cut_points(x in proptest::collection::vec(-50.0f64..100.0, 10), j in 0usize..10, eps in -1e-7f64..1e-7) {
            let cuts = [1.5, 30.0, 10.0, 45.0, 2.0, 1.0, 0.5];
            prop_assume!(cuts.iter().all(|c| (x[j] - c).abs() > 1e-6 && (x[j].fract().abs() - 0.5).abs() > 1e-6));
            let mut y = x.clone();
            y[j] += eps;
            prop_assert_eq!(adult_income(&x), adult_income(&y));
        }
    }
}
