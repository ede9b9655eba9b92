use serde::{Deserialize, Serialize};

use super::DetectError;

/// Nearest-rank quantile: the k-th smallest score with `k = ⌈level·n⌉`.
pub fn calibrate_threshold(scores: &[f64], level: f64) -> Result<f64, DetectError> {
    if scores.is_empty() {
        return Err(DetectError::Invalid("cannot calibrate on an empty score set".into()));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(DetectError::Invalid(format!("quantile level {level} outside (0, 1]")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((level * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok(sorted[k - 1])
}

/// Indices of rows with `score > tau`.
pub fn detect(scores: &[f64], tau: f64) -> Vec<usize> {
    scores.iter().enumerate().filter(|(_, &s)| s > tau).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub f1: f64,
    pub auroc: f64,
    pub auprc: f64,
    pub tau: f64,
    pub n_detected: usize,
}

fn check_classes(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), DetectError> {
    if scores.len() != labels.len() {
        return Err(DetectError::Invalid(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(DetectError::Invalid("metrics need both classes".into()));
    }
    Ok((pos, neg))
}

/// Fraction of (anomaly, normal) pairs ranked correctly, ties counted half.
/// Computed from average ranks.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64, DetectError> {
    let (pos, neg) = check_classes(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: `Σ (R_k − R_{k−1})·P_k` over descending distinct scores.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64, DetectError> {
    let (pos, _) = check_classes(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut ap, mut last_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        tp += idx[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        seen += j - i + 1;
        let recall = tp as f64 / pos as f64;
        ap += (recall - last_recall) * tp as f64 / seen as f64;
        last_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

/// F1 of the rule `score > tau` with anomalies as the positive class.
pub fn f1_at(scores: &[f64], labels: &[u8], tau: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > tau, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

pub fn detection_metrics(scores: &[f64], labels: &[u8], tau: f64) -> Result<DetectionMetrics, DetectError> {
    Ok(DetectionMetrics {
        f1: f1_at(scores, labels, tau),
        auroc: auroc(scores, labels)?,
        auprc: auprc(scores, labels)?,
        tau,
        n_detected: detect(scores, tau).len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let s: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(calibrate_threshold(&s, 0.995).unwrap(), 199.0);
        assert_eq!(calibrate_threshold(&s, 1.0).unwrap(), 200.0);
        assert_eq!(calibrate_threshold(&[3.0; 7], 0.5).unwrap(), 3.0);
        assert!(calibrate_threshold(&[], 0.5).is_err());
        assert!(calibrate_threshold(&s, 0.0).is_err());
    }

    #[test]
    fn strict_detection() {
        assert_eq!(detect(&[1.0, 2.0, 9.0], 5.0), vec![2]);
        assert!(detect(&[5.0], 5.0).is_empty());
        assert!(detect(&[1.0, 2.0], 3.0).is_empty());
    }

    #[test]
    fn metric_examples() {
        assert_eq!(auroc(&[0.9, 0.2, 0.8, 0.1], &[1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(f1_at(&[1.0, 2.0, 9.0], &[0, 0, 1], 5.0), 1.0);
        assert_eq!(auprc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!(auroc(&[1.0, 2.0], &[0, 0]).is_err());
    }

    #[test]
    fn ties_count_half() {
        assert_eq!(auroc(&[1.0, 1.0], &[1, 0]).unwrap(), 0.5);
        // one positive among three tied rows: precision 1/3 at full recall
        assert!((auprc(&[2.0, 2.0, 2.0], &[0, 1, 0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    fn pair_count_auroc(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut hits, mut pairs) = (0.0, 0.0);
        for (&a, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 1) {
            for (&b, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 0) {
                hits += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
                pairs += 1.0;
            }
        }
        hits / pairs
    }

    fn scored() -> impl proptest::strategy::Strategy<Value = (Vec<f64>, Vec<u8>)> {
        use proptest::prelude::*;
        (2usize..80).prop_flat_map(|n| {
            (proptest::collection::vec((0i32..12).prop_map(|v| v as f64 * 0.25), n), proptest::collection::vec(0u8..2, n))
                .prop_map(|(s, mut l)| {
                    l[0] = 0;
                    l[1] = 1;
                    (s, l)
                })
        })
    }

    proptest::proptest! {
        #[test]
        fn auroc_equals_pair_counting((scores, labels) in scored()) {
            let got = auroc(&scores, &labels).unwrap();
            proptest::prop_assert!((got - pair_count_auroc(&scores, &labels)).abs() < 1e-9);
        }

        #[test]
        fn metrics_are_invariant_to_monotone_rescaling((scores, labels) in scored()) {
            let moved: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
            proptest::prop_assert_eq!(auroc(&scores, &labels).unwrap(), auroc(&moved, &labels).unwrap());
            proptest::prop_assert_eq!(f1_at(&scores, &labels, 1.0), f1_at(&moved, &labels, 4.0));
        }

        #[test]
        fn threshold_is_the_nearest_rank(scores in proptest::collection::vec(-5.0f64..5.0, 1..300), level in 0.01f64..1.0) {
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            let k = (level * scores.len() as f64).ceil().max(1.0) as usize;
            let tau = calibrate_threshold(&scores, level).unwrap();
            proptest::prop_assert_eq!(tau, sorted[k - 1]);
            let below = scores.iter().filter(|&&s| s <= tau).count();
            proptest::prop_assert!(below as f64 >= level * scores.len() as f64 - 1e-9);
        }
    }
}
