//! Difficulty split of training positives via a tabular classifier.
//!
//! Corpus generation prioritizes positive pairs that a conventional
//! classifier gets wrong: those carry the signal a sequence model should
//! learn, while the easy ones are largely redundant. This module trains a
//! gradient-boosted decision-tree classifier on similarity features of a
//! dataset's train split and partitions the train positives into
//! `wrong` (misclassified) and `correct` (classified correctly).
//!
//! The classifier is self-contained and bit-deterministic: exact greedy
//! split search over a small automatically-selected configuration grid with
//! early stopping on an internal holdout. It is a non-reference stand-in
//! for a full AutoML tabular system and labels itself as such in its
//! summary; the produced [`FilterReport`] format is backend-agnostic.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{LabeledPair, PairDataset};
use crate::error::{ErrorClass, Fallible};

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("dataset {dataset:?}: train split is empty")]
    EmptyTrain { dataset: String },
    #[error("dataset {dataset:?}: train split has only one class; need both labels")]
    SingleClass { dataset: String },
    #[error("classifier was trained on {expected} attributes, dataset has {found}")]
    SchemaMismatch { expected: usize, found: usize },
}

impl Fallible for FilterError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

/// Training budget and reproducibility knobs.
#[derive(Debug, Clone)]
pub struct FilterOptions {
    pub seed: u64,
    /// Upper bound on boosting rounds per candidate.
    pub max_rounds: usize,
    /// Stop when the holdout loss has not improved for this many rounds.
    pub early_stop_rounds: usize,
    /// `(max_depth, learning_rate)` candidates; the holdout picks one.
    pub candidates: Vec<(usize, f64)>,
    /// Fraction of train rows held out for candidate selection.
    pub holdout_fraction: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            seed: 17,
            max_rounds: 200,
            early_stop_rounds: 12,
            candidates: vec![(2, 0.15), (3, 0.10), (4, 0.08)],
            holdout_fraction: 0.2,
        }
    }
}

impl FilterOptions {
    /// Small budget for tests and smoke runs.
    pub fn fast() -> Self {
        FilterOptions {
            max_rounds: 60,
            early_stop_rounds: 8,
            candidates: vec![(3, 0.2)],
            ..Default::default()
        }
    }
}

/// How the classifier was configured and how well it fits its train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    /// Identifies the implementation; "non-reference" marks the builtin
    /// stand-in for a full AutoML backend.
    pub backend: String,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub rounds: usize,
    pub train_accuracy: f64,
    pub candidates_evaluated: usize,
}

/// Partition of a dataset's train positives by classifier difficulty.
/// `wrong` and `correct` are row indices into the train split, disjoint,
/// and together cover exactly the positive rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub dataset: String,
    /// Fingerprint of the train split the classifier saw; consumers use it
    /// to invalidate cached reports.
    pub train_hash: String,
    pub wrong: Vec<usize>,
    pub correct: Vec<usize>,
    pub classifier: ClassifierSummary,
}

// ---------------------------------------------------------------------------
// Similarity features

fn tokens(s: &str) -> HashSet<String> {
    s.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

fn trigrams(s: &str) -> HashSet<String> {
    let lower = s.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    if chars.len() < 3 {
        if chars.is_empty() {
            return HashSet::new();
        }
        return HashSet::from([lower]);
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn len_ratio(a: &str, b: &str) -> f64 {
    let (la, lb) = (a.chars().count(), b.chars().count());
    let (min, max) = (la.min(lb), la.max(lb));
    if max == 0 {
        1.0
    } else {
        min as f64 / max as f64
    }
}

fn numeric_closeness(a: &str, b: &str) -> f64 {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => {
            let rel = (x - y).abs() / (1.0 + x.abs().max(y.abs()));
            1.0 - rel.min(1.0)
        }
        _ => -1.0,
    }
}

fn value_pair_features(left: Option<&str>, right: Option<&str>, out: &mut Vec<f64>) {
    match (left, right) {
        (Some(l), Some(r)) => {
            out.push(1.0);
            out.push(if l == r { 1.0 } else { 0.0 });
            out.push(if l.trim().eq_ignore_ascii_case(r.trim()) {
                1.0
            } else {
                0.0
            });
            out.push(jaccard(&tokens(l), &tokens(r)));
            out.push(jaccard(&trigrams(l), &trigrams(r)));
            out.push(len_ratio(l, r));
            out.push(numeric_closeness(l, r));
        }
        _ => {
            // One or both sides missing: presence flag 0, similarity
            // features at neutral/sentinel values.
            out.push(0.0);
            out.extend_from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        }
    }
}

const PER_ATTRIBUTE_FEATURES: usize = 7;
const RECORD_FEATURES: usize = 4;

/// Similarity feature vector for one pair; length `7 * n_attrs + 4`.
pub fn pair_features(pair: &LabeledPair) -> Vec<f64> {
    let n = pair.left.values.len().max(pair.right.values.len());
    let mut out = Vec::with_capacity(PER_ATTRIBUTE_FEATURES * n + RECORD_FEATURES);
    for i in 0..n {
        let l = pair.left.values.get(i).and_then(|v| v.as_deref());
        let r = pair.right.values.get(i).and_then(|v| v.as_deref());
        value_pair_features(l, r, &mut out);
    }
    let join = |vals: &[Option<String>]| {
        vals.iter()
            .map(|v| v.as_deref().unwrap_or(""))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let l = join(&pair.left.values);
    let r = join(&pair.right.values);
    out.push(if l == r { 1.0 } else { 0.0 });
    out.push(jaccard(&tokens(&l), &tokens(&r)));
    out.push(jaccard(&trigrams(&l), &trigrams(&r)));
    out.push(len_ratio(&l, &r));
    out
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value } => *value,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.eval(x)
                } else {
                    right.eval(x)
                }
            }
        }
    }
}

const LAMBDA: f64 = 1.0;

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>], // column-major: features[f][row]
    grad: &'a [f64],
    hess: &'a [f64],
    sorted: &'a [Vec<u32>], // rows sorted by feature value, per feature
    max_depth: usize,
    min_leaf: usize,
}

impl TreeBuilder<'_> {
    fn leaf(&self, rows: &[u32]) -> TreeNode {
        let g: f64 = rows.iter().map(|&r| self.grad[r as usize]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r as usize]).sum();
        TreeNode::Leaf {
            value: -g / (h + LAMBDA),
        }
    }

    fn build(&self, rows: &[u32], in_node: &mut [bool], depth: usize) -> TreeNode {
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return self.leaf(rows);
        }
        let g_total: f64 = rows.iter().map(|&r| self.grad[r as usize]).sum();
        let h_total: f64 = rows.iter().map(|&r| self.hess[r as usize]).sum();
        let parent_score = g_total * g_total / (h_total + LAMBDA);

        let mut best_gain = 1e-12;
        let mut best: Option<(usize, f64)> = None;
        for &r in rows {
            in_node[r as usize] = true;
        }
        for (f, order) in self.sorted.iter().enumerate() {
            let col = &self.features[f];
            let mut gl = 0.0;
            let mut hl = 0.0;
            let mut n_left = 0usize;
            let mut prev_value: Option<f64> = None;
            for &r in order {
                let row = r as usize;
                if !in_node[row] {
                    continue;
                }
                let v = col[row];
                if let Some(pv) = prev_value {
                    if v > pv && n_left >= self.min_leaf && rows.len() - n_left >= self.min_leaf {
                        let gr = g_total - gl;
                        let hr = h_total - hl;
                        let gain = gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA)
                            - parent_score;
                        if gain > best_gain {
                            best_gain = gain;
                            best = Some((f, (pv + v) / 2.0));
                        }
                    }
                }
                gl += self.grad[row];
                hl += self.hess[row];
                n_left += 1;
                prev_value = Some(v);
            }
        }
        for &r in rows {
            in_node[r as usize] = false;
        }

        let Some((feature, threshold)) = best else {
            return self.leaf(rows);
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| self.features[feature][r as usize] <= threshold);
        let left = self.build(&left_rows, in_node, depth + 1);
        let right = self.build(&right_rows, in_node, depth + 1);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logloss(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Trained difficulty classifier: boosted trees over similarity features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DifficultyClassifier {
    base_score: f64,
    learning_rate: f64,
    trees: Vec<TreeNode>,
    n_attributes: usize,
    summary: ClassifierSummary,
}

impl DifficultyClassifier {
    pub fn summary(&self) -> &ClassifierSummary {
        &self.summary
    }

    fn raw_score(&self, x: &[f64]) -> f64 {
        let mut s = self.base_score;
        for t in &self.trees {
            s += self.learning_rate * t.eval(x);
        }
        s
    }

    /// Match probability for one pair.
    pub fn predict_proba(&self, pair: &LabeledPair) -> f64 {
        sigmoid(self.raw_score(&pair_features(pair)))
    }

    pub fn predict_match(&self, pair: &LabeledPair) -> bool {
        self.predict_proba(pair) >= 0.5
    }
}

struct FitOutcome {
    trees: Vec<TreeNode>,
    holdout_loss: f64,
}

fn fit_boosted(
    features: &[Vec<f64>],
    labels: &[f64],
    fit_rows: &[u32],
    holdout_rows: &[u32],
    depth: usize,
    lr: f64,
    min_leaf: usize,
    max_rounds: usize,
    early_stop_rounds: usize,
    base_score: f64,
) -> FitOutcome {
    let n_rows = labels.len();
    let mut sorted: Vec<Vec<u32>> = Vec::with_capacity(features.len());
    for col in features {
        let mut order: Vec<u32> = fit_rows.to_vec();
        order.sort_by(|&a, &b| {
            col[a as usize]
                .partial_cmp(&col[b as usize])
                .expect("finite features")
                .then(a.cmp(&b))
        });
        sorted.push(order);
    }

    let mut scores = vec![base_score; n_rows];
    let mut grad = vec![0.0; n_rows];
    let mut hess = vec![0.0; n_rows];
    let mut in_node = vec![false; n_rows];
    let mut trees: Vec<TreeNode> = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut best_len = 0usize;
    let mut since_best = 0usize;

    let holdout_loss = |scores: &[f64]| -> f64 {
        if holdout_rows.is_empty() {
            return f64::NAN;
        }
        holdout_rows
            .iter()
            .map(|&r| logloss(sigmoid(scores[r as usize]), labels[r as usize]))
            .sum::<f64>()
            / holdout_rows.len() as f64
    };

    for _ in 0..max_rounds {
        for &r in fit_rows {
            let row = r as usize;
            let p = sigmoid(scores[row]);
            grad[row] = p - labels[row];
            hess[row] = (p * (1.0 - p)).max(1e-16);
        }
        let builder = TreeBuilder {
            features,
            grad: &grad,
            hess: &hess,
            sorted: &sorted,
            max_depth: depth,
            min_leaf,
        };
        let tree = builder.build(fit_rows, &mut in_node, 0);
        for &r in fit_rows.iter().chain(holdout_rows) {
            let row = r as usize;
            let x: Vec<f64> = features.iter().map(|col| col[row]).collect();
            scores[row] += lr * tree.eval(&x);
        }
        trees.push(tree);

        if holdout_rows.is_empty() {
            best_len = trees.len();
            continue;
        }
        let loss = holdout_loss(&scores);
        if loss + 1e-12 < best_loss {
            best_loss = loss;
            best_len = trees.len();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= early_stop_rounds {
                break;
            }
        }
    }
    trees.truncate(best_len.max(1));
    FitOutcome {
        trees,
        holdout_loss: best_loss,
    }
}

/// Fingerprint of a dataset's train split, used to key cached reports.
pub fn train_hash(dataset: &PairDataset) -> String {
    let mut hasher = Sha256::new();
    hasher.update(dataset.name.as_bytes());
    hasher.update([0]);
    for attr in &dataset.attributes {
        hasher.update(attr.as_bytes());
        hasher.update([1]);
    }
    for pair in &dataset.train {
        for side in [&pair.left, &pair.right] {
            for v in &side.values {
                match v {
                    Some(s) => {
                        hasher.update([2]);
                        hasher.update(s.as_bytes());
                    }
                    None => hasher.update([3]),
                }
            }
            hasher.update([4]);
        }
        hasher.update([pair.label.as_u8()]);
    }
    format!("{:x}", hasher.finalize())
}

/// Train the difficulty classifier on a dataset's train split.
pub fn train_difficulty_classifier(
    dataset: &PairDataset,
    opts: &FilterOptions,
) -> Result<DifficultyClassifier, FilterError> {
    let train = &dataset.train;
    if train.is_empty() {
        return Err(FilterError::EmptyTrain {
            dataset: dataset.name.clone(),
        });
    }
    let n_pos = train.iter().filter(|p| p.label.is_match()).count();
    if n_pos == 0 || n_pos == train.len() {
        return Err(FilterError::SingleClass {
            dataset: dataset.name.clone(),
        });
    }

    // Column-major feature matrix.
    let rows: Vec<Vec<f64>> = train.iter().map(pair_features).collect();
    let n_features = rows[0].len();
    let mut features: Vec<Vec<f64>> = vec![Vec::with_capacity(train.len()); n_features];
    for row in &rows {
        for (f, v) in row.iter().enumerate() {
            features[f].push(*v);
        }
    }
    let labels: Vec<f64> = train
        .iter()
        .map(|p| if p.label.is_match() { 1.0 } else { 0.0 })
        .collect();

    // Stratified holdout for candidate selection.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut pos_rows: Vec<u32> = (0..train.len() as u32)
        .filter(|&r| labels[r as usize] == 1.0)
        .collect();
    let mut neg_rows: Vec<u32> = (0..train.len() as u32)
        .filter(|&r| labels[r as usize] == 0.0)
        .collect();
    pos_rows.shuffle(&mut rng);
    neg_rows.shuffle(&mut rng);
    let pos_hold = ((pos_rows.len() as f64) * opts.holdout_fraction) as usize;
    let neg_hold = ((neg_rows.len() as f64) * opts.holdout_fraction) as usize;
    let mut holdout: Vec<u32> = pos_rows[..pos_hold]
        .iter()
        .chain(&neg_rows[..neg_hold])
        .copied()
        .collect();
    let mut fit: Vec<u32> = pos_rows[pos_hold..]
        .iter()
        .chain(&neg_rows[neg_hold..])
        .copied()
        .collect();
    holdout.sort_unstable();
    fit.sort_unstable();
    // With too little data for a two-class holdout, fit on everything with a
    // small fixed budget instead.
    let degenerate = pos_hold == 0 || neg_hold == 0;
    let (fit_rows, holdout_rows, round_cap) = if degenerate {
        let all: Vec<u32> = (0..train.len() as u32).collect();
        (all, Vec::new(), opts.max_rounds.min(40))
    } else {
        (fit, holdout, opts.max_rounds)
    };

    let min_leaf = if train.len() < 200 { 1 } else { 5 };
    let prior = (n_pos as f64 / train.len() as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (prior / (1.0 - prior)).ln();

    let mut chosen: Option<(usize, f64, FitOutcome)> = None;
    for &(depth, lr) in &opts.candidates {
        let outcome = fit_boosted(
            &features,
            &labels,
            &fit_rows,
            &holdout_rows,
            depth,
            lr,
            min_leaf,
            round_cap,
            opts.early_stop_rounds,
            base_score,
        );
        let better = match &chosen {
            None => true,
            Some((_, _, best)) => {
                !holdout_rows.is_empty() && outcome.holdout_loss + 1e-12 < best.holdout_loss
            }
        };
        if better {
            chosen = Some((depth, lr, outcome));
        }
        if holdout_rows.is_empty() {
            break; // nothing to compare candidates with
        }
    }
    let (depth, lr, selected) = chosen.expect("at least one candidate");

    // Refit on the full train split with the selected shape and the round
    // count found by early stopping.
    let all_rows: Vec<u32> = (0..train.len() as u32).collect();
    let final_fit = fit_boosted(
        &features,
        &labels,
        &all_rows,
        &[],
        depth,
        lr,
        min_leaf,
        selected.trees.len(),
        opts.early_stop_rounds,
        base_score,
    );

    let mut clf = DifficultyClassifier {
        base_score,
        learning_rate: lr,
        trees: final_fit.trees,
        n_attributes: dataset.attributes.len(),
        summary: ClassifierSummary {
            backend: "builtin-gbdt (non-reference)".to_string(),
            max_depth: depth,
            learning_rate: lr,
            rounds: 0,
            train_accuracy: 0.0,
            candidates_evaluated: opts.candidates.len(),
        },
    };
    clf.summary.rounds = clf.trees.len();
    let correct = train
        .iter()
        .zip(&labels)
        .filter(|(p, &y)| clf.predict_match(p) == (y == 1.0))
        .count();
    clf.summary.train_accuracy = correct as f64 / train.len() as f64;
    Ok(clf)
}

/// Partition the train positives of `dataset` by whether `classifier` gets
/// them right. Indices refer to rows of the train split.
pub fn split_positives(
    dataset: &PairDataset,
    classifier: &DifficultyClassifier,
) -> Result<FilterReport, FilterError> {
    if classifier.n_attributes != dataset.attributes.len() {
        return Err(FilterError::SchemaMismatch {
            expected: classifier.n_attributes,
            found: dataset.attributes.len(),
        });
    }
    let mut wrong = Vec::new();
    let mut correct = Vec::new();
    for (i, pair) in dataset.train.iter().enumerate() {
        if !pair.label.is_match() {
            continue;
        }
        if classifier.predict_match(pair) {
            correct.push(i);
        } else {
            wrong.push(i);
        }
    }
    Ok(FilterReport {
        dataset: dataset.name.clone(),
        train_hash: train_hash(dataset),
        wrong,
        correct,
        classifier: classifier.summary.clone(),
    })
}
