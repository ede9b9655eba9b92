use ndarray::Array2;
use rand::seq::SliceRandom;

use super::{DataError, DatasetBundle, LabelRule, Split};
use crate::rng;
use crate::scm::{self, Scm};

/// Requested row counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub normal_train: usize,
    pub normal_unlabeled: usize,
    pub anomalous: usize,
}

impl Counts {
    pub fn new(normal_train: usize, normal_unlabeled: usize, anomalous: usize) -> Self {
        Self { normal_train, normal_unlabeled, anomalous }
    }
}

/// Rejection-sampling diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenReport {
    pub draws: u64,
    /// Draws falling in neither the normal nor the anomalous band.
    pub in_band: u64,
    /// Draws of a class whose quota was already full.
    pub surplus: u64,
    /// Redraws caused by non-finite mechanism outputs.
    pub non_finite: u64,
}

const WINDOW: u64 = 1_000_000;
const MIN_ACCEPT: u64 = WINDOW / 1000;

/// Draws rows from `scm` until every quota is met. Normal rows fill the
/// training split first; the unlabeled split is shuffled.
pub fn generate(scm: &Scm, rule: &LabelRule, counts: Counts, seed: u64) -> Result<(DatasetBundle, GenReport), DataError> {
    if counts.normal_train == 0 || counts.normal_unlabeled == 0 || counts.anomalous == 0 {
        return Err(DataError::Invalid(format!("all counts must be at least 1, got {counts:?}")));
    }
    let d = scm.dim();
    let row_seed = rng::sub_seed(seed, "rows");
    let need_normal = counts.normal_train + counts.normal_unlabeled;
    let mut normals: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(need_normal);
    let mut anomalies: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(counts.anomalous);
    let mut report = GenReport::default();
    let mut window_accepted = 0u64;
    while normals.len() < need_normal || anomalies.len() < counts.anomalous {
        let (x, u, redraws) = scm.sample_row(row_seed, report.draws)?;
        report.draws += 1;
        report.non_finite += redraws as u64;
        let v = rule.value(&x);
        let target = if rule.is_normal_value(v) {
            Some((&mut normals, need_normal))
        } else if rule.is_anomaly_value(v) {
            Some((&mut anomalies, counts.anomalous))
        } else {
            None
        };
        match target {
            None => report.in_band += 1,
            Some((rows, quota)) if rows.len() < quota => {
                rows.push((x, u, v));
                window_accepted += 1;
            }
            Some(_) => report.surplus += 1,
        }
        if report.draws % WINDOW == 0 {
            if window_accepted < MIN_ACCEPT {
                return Err(DataError::LowAcceptance(format!(
                    "{window_accepted} rows kept in the last {WINDOW} draws; have {}/{need_normal} normal and {}/{} anomalous after {} draws ({} in the rejection band, {} surplus)",
                    normals.len(),
                    anomalies.len(),
                    counts.anomalous,
                    report.draws,
                    report.in_band,
                    report.surplus
                )));
            }
            window_accepted = 0;
        }
    }
    let unl_normals = normals.split_off(counts.normal_train);
    let train = to_split(&normals, 0, d);
    let mut unlabeled: Vec<((Vec<f64>, Vec<f64>, f64), u8)> =
        unl_normals.into_iter().map(|r| (r, 0)).chain(anomalies.into_iter().map(|r| (r, 1))).collect();
    unlabeled.shuffle(&mut rng::stream(seed, "shuffle"));
    let labels: Vec<u8> = unlabeled.iter().map(|(_, l)| *l).collect();
    let rows: Vec<_> = unlabeled.into_iter().map(|(r, _)| r).collect();
    let mut unl = to_split(&rows, 0, d);
    unl.labels = labels;
    let names = scm.graph().names().to_vec();
    Ok((DatasetBundle::new(names, train, unl), report))
}

fn to_split(rows: &[(Vec<f64>, Vec<f64>, f64)], label: u8, d: usize) -> Split {
    let n = rows.len();
    let x = Array2::from_shape_fn((n, d), |(i, j)| rows[i].0[j]);
    let u = Array2::from_shape_fn((n, d), |(i, j)| rows[i].1[j]);
    Split { x, u, labels: vec![label; n], values: rows.iter().map(|r| r.2).collect() }
}

/// `n` unfiltered rows from `scm` (no label selection), on a stream separate
/// from the labeled splits.
pub fn observational(scm: &Scm, n: usize, seed: u64) -> Result<Split, DataError> {
    let s = scm.sample(n, rng::sub_seed(seed, "observational"))?;
    let d = scm.dim();
    Ok(Split {
        x: Array2::from_shape_fn((n, d), |(i, j)| s.x[i][j]),
        u: Array2::from_shape_fn((n, d), |(i, j)| s.u[i][j]),
        labels: vec![0; n],
        values: vec![f64::NAN; n],
    })
}

/// Loan dataset: normals have `Y > 0.9`, anomalies `Y < 0.1`.
pub fn gen_loan(normal_train: usize, normal_unlabeled: usize, anomalous: usize, seed: u64) -> Result<DatasetBundle, DataError> {
    let counts = Counts::new(normal_train, normal_unlabeled, anomalous);
    Ok(generate(&scm::loan(), &LabelRule::Loan, counts, seed)?.0)
}

/// Adult dataset: normals earn at most 50,000, anomalies more.
pub fn gen_adult(normal_train: usize, normal_unlabeled: usize, anomalous: usize, seed: u64) -> Result<DatasetBundle, DataError> {
    let counts = Counts::new(normal_train, normal_unlabeled, anomalous);
    Ok(generate(&scm::adult(), &LabelRule::Adult, counts, seed)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observational_rows_are_consistent() {
        let m = scm::loan();
        let s = observational(&m, 200, 5).unwrap();
        assert_eq!(s.len(), 200);
        for i in 0..s.len() {
            let r = m.residuals(&s.x.row(i).to_vec(), &s.u.row(i).to_vec());
            assert!(r.iter().all(|&v| v == 0.0));
        }
        assert_eq!(observational(&m, 200, 5).unwrap().x, s.x);
    }

    #[test]
    fn exact_counts_and_ratio() {
        let b = gen_loan(50, 100, 10, 3).unwrap();
        assert_eq!(b.train.len(), 50);
        assert_eq!(b.unlabeled.len(), 110);
        assert_eq!(b.unlabeled.anomalies(), 10);
        assert!(b.train.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(gen_adult(20, 20, 2, 9).unwrap(), gen_adult(20, 20, 2, 9).unwrap());
        assert_ne!(gen_adult(20, 20, 2, 9).unwrap(), gen_adult(20, 20, 2, 10).unwrap());
    }

    #[test]
    fn zero_count_rejected() {
        assert!(matches!(gen_loan(0, 1, 1, 0), Err(DataError::Invalid(_))));
    }

    #[test]
    fn impossible_band_aborts() {
        use crate::scm::{CompareOp, Predicate, Term};
        let rule = LabelRule::Custom {
            terms: vec![Term::Linear { weights: [(1usize, 1.0)].into_iter().collect() }],
            normal: Predicate { op: CompareOp::Lt, value: 1e6 },
            anomaly: Predicate { op: CompareOp::Gt, value: 1e6 },
        };
        let err = generate(&scm::loan(), &rule, Counts::new(1, 1, 1), 0).unwrap_err();
        assert!(matches!(err, DataError::LowAcceptance(_)), "{err}");
    }
}
