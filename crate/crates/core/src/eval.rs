//! Leave-one-dataset-out evaluation: down-sample oversized test splits,
//! run a matcher on the held-out dataset's test pairs, compute F1, and
//! aggregate per-target reports into a summary row.
//!
//! The zero-shot contract is enforced, not assumed: a matcher whose
//! training provenance lists the target dataset is rejected with a hard
//! error before a single prediction is made.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{LabeledPair, MatchLabel, PairDataset, Record};
use crate::error::{ErrorClass, Fallible};
use crate::model::{Matcher, ModelError};

/// Test splits strictly larger than this are down-sampled.
pub const DOWNSAMPLE_TRIGGER: usize = 1250;
pub const DOWNSAMPLE_POSITIVES: usize = 250;
pub const DOWNSAMPLE_NEGATIVES: usize = 1000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("target dataset `{target}` not found; have: {available}")]
    TargetNotFound { target: String, available: String },
    #[error(
        "zero-shot violation: matcher `{matcher_id}` was trained on data from `{target}`"
    )]
    PurityViolation { matcher_id: String, target: String },
    #[error("duplicate report for target `{target}`")]
    DuplicateTarget { target: String },
    #[error("cannot aggregate zero reports")]
    NoReports,
    #[error("pair override index {index} is out of bounds for a test split of {len}")]
    BadOverride { index: usize, len: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl Fallible for EvalError {
    fn class(&self) -> ErrorClass {
        match self {
            EvalError::Model(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Apply the oversized-test down-sampling rule.
    pub downsample: bool,
    pub seed: u64,
    /// Explicit test-pair indices (into the target's test split) that
    /// replace the down-sampling rule; supports exact-pair parity with
    /// externally published evaluation pair lists.
    pub pair_override: Option<Vec<usize>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            downsample: true,
            seed: 42,
            pair_override: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub target_dataset: String,
    pub matcher_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub test_size_used: usize,
    pub downsampled: bool,
    pub seed: u64,
}

/// Precision, recall, and F1 from confusion counts, all with the 0/0 → 0
/// convention.
pub fn prf_from_counts(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |num: usize, denom: usize| {
        if denom == 0 {
            0.0
        } else {
            num as f64 / denom as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

impl EvalReport {
    /// Report carrying a known F1 with no confusion counts; for feeding
    /// published per-target scores into [`aggregate`].
    pub fn from_f1(target: &str, f1: f64) -> Self {
        EvalReport {
            target_dataset: target.to_string(),
            matcher_id: "fixed".to_string(),
            precision: f1,
            recall: f1,
            f1,
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 0,
            test_size_used: 0,
            downsampled: false,
            seed: 0,
        }
    }
}

/// Down-sample an oversized test split: splits of at most
/// [`DOWNSAMPLE_TRIGGER`] pairs pass through unchanged; larger ones are cut
/// to at most [`DOWNSAMPLE_POSITIVES`] positives and
/// [`DOWNSAMPLE_NEGATIVES`] negatives, drawn uniformly and shuffled,
/// deterministically in `seed`.
pub fn downsample_test(test: &[LabeledPair], seed: u64) -> Vec<LabeledPair> {
    if test.len() <= DOWNSAMPLE_TRIGGER {
        return test.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives: Vec<usize> = (0..test.len())
        .filter(|&i| test[i].label == MatchLabel::Match)
        .collect();
    let negatives: Vec<usize> = (0..test.len())
        .filter(|&i| test[i].label == MatchLabel::NonMatch)
        .collect();
    let mut chosen: Vec<usize> = Vec::new();
    for (pool, cap) in [
        (positives, DOWNSAMPLE_POSITIVES),
        (negatives, DOWNSAMPLE_NEGATIVES),
    ] {
        let take = pool.len().min(cap);
        chosen.extend(
            rand::seq::index::sample(&mut rng, pool.len(), take)
                .iter()
                .map(|i| pool[i]),
        );
    }
    chosen.shuffle(&mut rng);
    chosen.into_iter().map(|i| test[i].clone()).collect()
}

/// Evaluate `matcher` on the test split of `target`, which must not have
/// contributed any training data to the matcher.
pub fn evaluate_zero_shot(
    datasets: &[PairDataset],
    target: &str,
    matcher: &dyn Matcher,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let dataset = datasets.iter().find(|d| d.name == target).ok_or_else(|| {
        EvalError::TargetNotFound {
            target: target.to_string(),
            available: datasets
                .iter()
                .map(|d| d.name.as_str())
                .collect::<Vec<_>>()
                .join(", "),
        }
    })?;
    let matcher_id = matcher.id();
    if let Some(sources) = matcher.training_sources() {
        if sources.iter().any(|s| s == target) {
            return Err(EvalError::PurityViolation {
                matcher_id,
                target: target.to_string(),
            });
        }
    }

    let (used, downsampled): (Vec<LabeledPair>, bool) = match &cfg.pair_override {
        Some(indices) => {
            let mut picked = Vec::with_capacity(indices.len());
            for &index in indices {
                let pair = dataset.test.get(index).ok_or(EvalError::BadOverride {
                    index,
                    len: dataset.test.len(),
                })?;
                picked.push(pair.clone());
            }
            (picked, false)
        }
        None if cfg.downsample => {
            let sampled = downsample_test(&dataset.test, cfg.seed);
            let fired = sampled.len() != dataset.test.len();
            (sampled, fired)
        }
        None => (dataset.test.to_vec(), false),
    };

    let pairs: Vec<(Record, Record)> = used
        .iter()
        .map(|p| (p.left.clone(), p.right.clone()))
        .collect();
    let predictions = matcher.predict(&pairs)?;
    debug_assert_eq!(predictions.len(), used.len());

    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (pred, pair) in predictions.iter().zip(&used) {
        match (pred.label == MatchLabel::Match, pair.label == MatchLabel::Match) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let (precision, recall, f1) = prf_from_counts(tp, fp, fn_);
    Ok(EvalReport {
        target_dataset: target.to_string(),
        matcher_id,
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        tn,
        test_size_used: used.len(),
        downsampled,
        seed: cfg.seed,
    })
}

/// Per-target F1 columns plus their unweighted mean. Scores are fractions
/// in `[0, 1]`; [`EvalSummary::to_csv`] displays them as percentages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub matcher_id: String,
    pub targets: Vec<String>,
    pub f1_scores: Vec<f64>,
    pub mean_f1: f64,
}

impl EvalSummary {
    /// Two-line CSV: a header of target names plus `mean`, and a row of
    /// percentage scores with two decimals.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["matcher".to_string()];
        header.extend(self.targets.iter().cloned());
        header.push("mean".to_string());
        let mut row = vec![self.matcher_id.clone()];
        row.extend(self.f1_scores.iter().map(|f| format!("{:.2}", f * 100.0)));
        row.push(format!("{:.2}", self.mean_f1 * 100.0));
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

/// Combine per-target reports into one summary row; every report must name
/// a distinct target.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalSummary, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let mut seen = std::collections::BTreeSet::new();
    for report in reports {
        if !seen.insert(report.target_dataset.as_str()) {
            return Err(EvalError::DuplicateTarget {
                target: report.target_dataset.clone(),
            });
        }
    }
    let mean = reports.iter().map(|r| r.f1).sum::<f64>() / reports.len() as f64;
    Ok(EvalSummary {
        matcher_id: reports[0].matcher_id.clone(),
        targets: reports.iter().map(|r| r.target_dataset.clone()).collect(),
        f1_scores: reports.iter().map(|r| r.f1).collect(),
        mean_f1: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MatchPrediction;

    fn pair(text: &str, other: &str, label: MatchLabel) -> LabeledPair {
        LabeledPair {
            left: Record::from_strs(&[text]),
            right: Record::from_strs(&[other]),
            label,
        }
    }

    /// Predicts a match iff left and right are byte-identical.
    struct ExactEquality;

    impl Matcher for ExactEquality {
        fn id(&self) -> String {
            "exact-equality".to_string()
        }

        fn predict(
            &self,
            pairs: &[(Record, Record)],
        ) -> Result<Vec<MatchPrediction>, ModelError> {
            Ok(pairs
                .iter()
                .map(|(l, r)| MatchPrediction::from_score(if l == r { 1.0 } else { 0.0 }))
                .collect())
        }
    }

    struct Tainted(Vec<String>);

    impl Matcher for Tainted {
        fn id(&self) -> String {
            "tainted".to_string()
        }

        fn predict(
            &self,
            pairs: &[(Record, Record)],
        ) -> Result<Vec<MatchPrediction>, ModelError> {
            Ok(pairs.iter().map(|_| MatchPrediction::from_score(0.0)).collect())
        }

        fn training_sources(&self) -> Option<&[String]> {
            Some(&self.0)
        }
    }

    fn dataset(name: &str, test: Vec<LabeledPair>) -> PairDataset {
        PairDataset {
            name: name.to_string(),
            domain: "test".to_string(),
            attributes: vec!["value".to_string()],
            train: Vec::new(),
            valid: Vec::new(),
            test,
        }
    }

    #[test]
    fn boundary_split_passes_through() {
        let test: Vec<LabeledPair> = (0..1250)
            .map(|i| pair(&i.to_string(), "x", MatchLabel::NonMatch))
            .collect();
        assert_eq!(downsample_test(&test, 1).len(), 1250);
    }

    #[test]
    fn downsampling_is_deterministic_and_label_preserving() {
        let mut test = Vec::new();
        for i in 0..400 {
            test.push(pair(&format!("p{i}"), &format!("p{i}"), MatchLabel::Match));
        }
        for i in 0..2000 {
            test.push(pair(&format!("n{i}"), "zz", MatchLabel::NonMatch));
        }
        let a = downsample_test(&test, 7);
        let b = downsample_test(&test, 7);
        assert_eq!(a.len(), 1250);
        assert_eq!(
            a.iter().filter(|p| p.label == MatchLabel::Match).count(),
            250
        );
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
        // No duplicates: every sampled pair has a distinct left value.
        let mut lefts: Vec<&Option<String>> = a.iter().map(|p| &p.left.values[0]).collect();
        lefts.sort();
        lefts.dedup();
        assert_eq!(lefts.len(), 1250);
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let mut test = Vec::new();
        for i in 0..3 {
            test.push(pair(&format!("m{i}"), &format!("m{i}"), MatchLabel::Match));
        }
        for i in 0..7 {
            test.push(pair(&format!("a{i}"), &format!("b{i}"), MatchLabel::NonMatch));
        }
        let datasets = vec![dataset("songs", test)];
        let report =
            evaluate_zero_shot(&datasets, "songs", &ExactEquality, &EvalConfig::default())
                .unwrap();
        assert_eq!((report.tp, report.tn, report.fp, report.fn_), (3, 7, 0, 0));
        assert_eq!(report.f1, 1.0);
        assert!(!report.downsampled);
    }

    #[test]
    fn all_negative_predictor_scores_zero() {
        let test = vec![
            pair("a", "a", MatchLabel::Match),
            pair("b", "c", MatchLabel::NonMatch),
        ];
        let datasets = vec![dataset("d", test)];
        let matcher = Tainted(vec!["other".to_string()]);
        let report =
            evaluate_zero_shot(&datasets, "d", &matcher, &EvalConfig::default()).unwrap();
        assert_eq!(report.f1, 0.0);
        assert_eq!(report.fn_, 1);
    }

    #[test]
    fn training_on_the_target_is_refused() {
        let datasets = vec![dataset("d", vec![pair("a", "a", MatchLabel::Match)])];
        let matcher = Tainted(vec!["x".to_string(), "d".to_string()]);
        match evaluate_zero_shot(&datasets, "d", &matcher, &EvalConfig::default()) {
            Err(EvalError::PurityViolation { target, .. }) => assert_eq!(target, "d"),
            other => panic!("expected purity violation, got {other:?}"),
        }
    }

    #[test]
    fn missing_target_lists_available_names() {
        let datasets = vec![dataset("only", Vec::new())];
        let err = evaluate_zero_shot(&datasets, "nope", &ExactEquality, &EvalConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("only"));
    }

    #[test]
    fn pair_override_selects_exact_pairs() {
        let test = vec![
            pair("a", "a", MatchLabel::Match),
            pair("b", "z", MatchLabel::NonMatch),
            pair("c", "c", MatchLabel::Match),
        ];
        let datasets = vec![dataset("d", test)];
        let cfg = EvalConfig {
            pair_override: Some(vec![2, 0]),
            ..EvalConfig::default()
        };
        let report = evaluate_zero_shot(&datasets, "d", &ExactEquality, &cfg).unwrap();
        assert_eq!(report.test_size_used, 2);
        assert_eq!(report.tp, 2);

        let bad = EvalConfig {
            pair_override: Some(vec![9]),
            ..EvalConfig::default()
        };
        match evaluate_zero_shot(&datasets, "d", &ExactEquality, &bad) {
            Err(EvalError::BadOverride { index, len }) => assert_eq!((index, len), (9, 3)),
            other => panic!("expected bad override, got {other:?}"),
        }
    }

    #[test]
    fn f1_identity_on_random_counts() {
        let mut state = 0x243f_6a88u64;
        for _ in 0..500 {
            state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1);
            let tp = (state >> 33) as usize % 50;
            let fp = (state >> 13) as usize % 50;
            let fn_ = (state >> 3) as usize % 50;
            let (p, r, f1) = prf_from_counts(tp, fp, fn_);
            let expect = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            assert!((f1 - expect).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&f1));
        }
    }

    #[test]
    fn aggregation_means_and_rejects_duplicates() {
        let a = EvalReport::from_f1("a", 0.8);
        let b = EvalReport::from_f1("b", 0.6);
        let summary = aggregate(&[a.clone(), b]).unwrap();
        assert!((summary.mean_f1 - 0.7).abs() < 1e-12);
        assert_eq!(summary.targets, vec!["a", "b"]);

        let single = aggregate(std::slice::from_ref(&a)).unwrap();
        assert!((single.mean_f1 - 0.8).abs() < 1e-12);

        match aggregate(&[a.clone(), a]) {
            Err(EvalError::DuplicateTarget { target }) => assert_eq!(target, "a"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
        assert!(matches!(aggregate(&[]), Err(EvalError::NoReports)));
    }

    #[test]
    fn csv_row_displays_percentages() {
        let summary = aggregate(&[
            EvalReport::from_f1("left", 0.8605),
            EvalReport::from_f1("right", 0.5),
        ])
        .unwrap();
        let csv = summary.to_csv();
        assert_eq!(
            csv,
            "matcher,left,right,mean\nfixed,86.05,50.00,68.03\n"
        );
    }
}
