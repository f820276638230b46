//! Evaluation pipeline contracts: down-sampling composition, baseline F1
//! against a brute-force oracle, and the published-row aggregation check.

mod common;

use tinymatch_core::baseline::{StringSimConfig, StringSimMatcher};
use tinymatch_core::eval::{
    aggregate, downsample_test, evaluate_zero_shot, EvalConfig, EvalReport,
};
use tinymatch_core::{LabeledPair, MatchLabel, Matcher, PairDataset, Record};

fn pair(left: &str, right: &str, label: MatchLabel) -> LabeledPair {
    LabeledPair {
        left: Record::from_strs(&[left]),
        right: Record::from_strs(&[right]),
        label,
    }
}

fn dataset(name: &str, test: Vec<LabeledPair>) -> PairDataset {
    PairDataset {
        name: name.to_string(),
        domain: "synthetic".to_string(),
        attributes: vec!["title".to_string()],
        train: Vec::new(),
        valid: Vec::new(),
        test,
    }
}

#[test]
fn oversized_splits_shrink_to_the_caps() {
    // 400 positives and 2000 negatives: both classes exceed their caps.
    let mut test = Vec::new();
    for i in 0..400 {
        test.push(pair(&format!("m{i}"), &format!("m{i}"), MatchLabel::Match));
    }
    for i in 0..2000 {
        test.push(pair(&format!("a{i}"), &format!("b{i}"), MatchLabel::NonMatch));
    }
    let sampled = downsample_test(&test, 11);
    assert_eq!(sampled.len(), 1250);
    assert_eq!(
        sampled.iter().filter(|p| p.label == MatchLabel::Match).count(),
        250
    );

    // 100 positives and 5000 negatives: the positive class is already under
    // its cap and must be kept whole.
    let mut test = Vec::new();
    for i in 0..100 {
        test.push(pair(&format!("m{i}"), &format!("m{i}"), MatchLabel::Match));
    }
    for i in 0..5000 {
        test.push(pair(&format!("a{i}"), &format!("b{i}"), MatchLabel::NonMatch));
    }
    let sampled = downsample_test(&test, 11);
    assert_eq!(sampled.len(), 1100);
    assert_eq!(
        sampled.iter().filter(|p| p.label == MatchLabel::Match).count(),
        100
    );
}

#[test]
fn evaluation_applies_downsampling_end_to_end() {
    let mut test = Vec::new();
    for i in 0..400 {
        test.push(pair(&format!("m{i}"), &format!("m{i}"), MatchLabel::Match));
    }
    for i in 0..2000 {
        test.push(pair(&format!("left{i}"), &format!("zz{i}"), MatchLabel::NonMatch));
    }
    let datasets = vec![dataset("big", test)];
    let matcher = StringSimMatcher::default();
    let report =
        evaluate_zero_shot(&datasets, "big", &matcher, &EvalConfig::default()).unwrap();
    assert!(report.downsampled);
    assert_eq!(report.test_size_used, 1250);
    assert_eq!(report.tp + report.fn_, 250, "every sampled positive is scored");
    assert_eq!(report.fp + report.tn, 1000);
}

#[test]
fn baseline_f1_matches_brute_force_oracle_on_twenty_pairs() {
    let fixture = vec![
        pair("alpha beta", "alpha beta", MatchLabel::Match),
        pair("ab", "bc", MatchLabel::Match), // ratio exactly 0.5: strict threshold miss
        pair("banana", "ananas", MatchLabel::Match),
        pair("context", "contact", MatchLabel::Match),
        pair("résumé", "resume", MatchLabel::Match),
        pair("abc", "xyz", MatchLabel::Match),
        pair("The Big Lebowski", "Big Lebowski", MatchLabel::Match),
        pair("iphone 12 pro", "iphone 12 pro max", MatchLabel::Match),
        pair("aaaa", "aa", MatchLabel::Match),
        pair("hello world", "helo world", MatchLabel::Match),
        pair("digital camera", "film projector", MatchLabel::NonMatch),
        pair("qqq", "zzz", MatchLabel::NonMatch),
        pair("abcbdab", "bdcaba", MatchLabel::NonMatch),
        pair("xyxyx", "yxyxy", MatchLabel::NonMatch), // ratio 0.8: false positive
        pair("N/A", "N/A", MatchLabel::NonMatch),     // identical missing markers
        pair("red wine 2011", "white wine 2012", MatchLabel::NonMatch),
        pair("", "nonempty", MatchLabel::NonMatch),
        pair("sony wh-1000xm4", "bose qc35", MatchLabel::NonMatch),
        pair("a1 b2 c3", "a1 b2 c4", MatchLabel::NonMatch),
        pair("total riff", "totally different", MatchLabel::NonMatch),
    ];
    assert_eq!(fixture.len(), 20);
    let datasets = vec![dataset("twenty", fixture.clone())];
    let matcher = StringSimMatcher::new(StringSimConfig::default());
    let report =
        evaluate_zero_shot(&datasets, "twenty", &matcher, &EvalConfig::default()).unwrap();

    // Independent pass: brute-force ratio, same strict threshold rule.
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for p in &fixture {
        let ratio = common::oracle_gestalt_ratio(
            p.left.values[0].as_deref().unwrap_or(""),
            p.right.values[0].as_deref().unwrap_or(""),
        );
        let predicted_match = ratio > 0.5;
        match (predicted_match, p.label == MatchLabel::Match) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    assert_eq!((report.tp, report.fp, report.fn_, report.tn), (tp, fp, fn_, tn));
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    let expected_f1 = 2.0 * precision * recall / (precision + recall);
    assert!((report.f1 - expected_f1).abs() < 1e-12);

    // The fixture must actually exercise both interesting boundaries.
    assert!(fn_ >= 2, "strict-threshold and disjoint positives missed");
    assert!(fp >= 2, "high-overlap negatives predicted as matches");

    // Strictness pinned: ratio exactly 0.5 is NOT a match.
    let preds = matcher
        .predict(&[(Record::from_strs(&["ab"]), Record::from_strs(&["bc"]))])
        .unwrap();
    assert_eq!(preds[0].score, 0.5);
    assert_eq!(preds[0].label, MatchLabel::NonMatch);
}

#[test]
fn published_row_aggregates_to_its_printed_mean() {
    // Nine per-target F1 fractions whose published mean is 81.96 (in
    // percentage points); the aggregation must reproduce it to ±0.005.
    let scores = [
        0.8605, 0.5508, 0.9655, 0.9361, 0.9059, 1.0000, 0.9091, 0.6151, 0.6331,
    ];
    let reports: Vec<EvalReport> = scores
        .iter()
        .enumerate()
        .map(|(i, &f1)| EvalReport::from_f1(&format!("d{i}"), f1))
        .collect();
    let summary = aggregate(&reports).unwrap();
    assert!(
        (summary.mean_f1 * 100.0 - 81.96).abs() < 0.005,
        "mean {} out of tolerance",
        summary.mean_f1 * 100.0
    );
    let csv = summary.to_csv();
    assert!(csv.ends_with(",81.96\n"), "csv row: {csv}");
    assert!(csv.contains("100.00"), "perfect score prints as 100.00");
}
