//! Gestalt string-similarity matching without any learned parameters.
//!
//! [`gestalt_ratio`] implements Ratcliff/Obershelp pattern matching over
//! Unicode scalar values: recursively find the longest common contiguous
//! block, then match the regions to its left and right, and score
//! `2 * matched / (len(a) + len(b))`. Tie-breaking follows the widely used
//! reference behavior — among equally long blocks, the one starting earliest
//! in `a`, then earliest in `b`, wins — and no "popular element" junk
//! heuristic is applied, so results are stable across input sizes.
//!
//! [`StringSimMatcher`] turns this into a record-pair matcher: each record's
//! values are joined with a separator (missing values contribute an empty
//! string) and the pair is a match iff the ratio strictly exceeds the
//! threshold. The left record is always the first argument to the ratio;
//! gestalt matching is not guaranteed symmetric, so argument order is part
//! of the contract.

use std::collections::HashMap;

use crate::data::{MatchLabel, Record};
use crate::model::{Matcher, MatchPrediction, ModelError};

/// Longest common block in `a[alo..ahi]` x `b[blo..bhi]`, as
/// `(start_a, start_b, len)`. Among maximal blocks the earliest `start_a`,
/// then earliest `start_b`, is chosen.
fn longest_block(
    a: &[char],
    b: &[char],
    b2j: &HashMap<char, Vec<usize>>,
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> (usize, usize, usize) {
    let (mut besti, mut bestj, mut bestsize) = (alo, blo, 0usize);
    // j2len[j] = length of the common run ending at a[i-1], b[j].
    let mut j2len: Vec<usize> = vec![0; b.len()];
    let mut touched: Vec<usize> = Vec::new();
    for (i, ch) in a.iter().enumerate().take(ahi).skip(alo) {
        let mut new_touched = Vec::new();
        if let Some(js) = b2j.get(ch) {
            for &j in js {
                if j < blo {
                    continue;
                }
                if j >= bhi {
                    break;
                }
                let k = if j > blo { j2len[j - 1] + 1 } else { 1 };
                new_touched.push((j, k));
                if k > bestsize {
                    besti = i + 1 - k;
                    bestj = j + 1 - k;
                    bestsize = k;
                }
            }
        }
        for &j in &touched {
            j2len[j] = 0;
        }
        touched.clear();
        for (j, k) in new_touched {
            j2len[j] = k;
            touched.push(j);
        }
    }
    (besti, bestj, bestsize)
}

/// Total number of matched elements across all blocks.
fn matched_total(a: &[char], b: &[char]) -> usize {
    let mut b2j: HashMap<char, Vec<usize>> = HashMap::new();
    for (j, ch) in b.iter().enumerate() {
        b2j.entry(*ch).or_default().push(j);
    }
    let mut total = 0;
    let mut queue = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = queue.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let (i, j, k) = longest_block(a, b, &b2j, alo, ahi, blo, bhi);
        if k > 0 {
            total += k;
            queue.push((alo, i, blo, j));
            queue.push((i + k, ahi, j + k, bhi));
        }
    }
    total
}

/// Gestalt similarity of two strings in `[0, 1]`. Two empty strings are
/// defined to be identical (ratio 1.0).
pub fn gestalt_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let t = a.len() + b.len();
    if t == 0 {
        return 1.0;
    }
    2.0 * matched_total(&a, &b) as f64 / t as f64
}

/// Configuration for [`StringSimMatcher`].
#[derive(Debug, Clone, PartialEq)]
pub struct StringSimConfig {
    /// A pair is predicted a match iff its ratio is strictly greater than
    /// this. The default 0.5 means "more than half the characters line up".
    pub threshold: f64,
    /// Joins a record's values into the compared string.
    pub separator: String,
}

impl Default for StringSimConfig {
    fn default() -> Self {
        StringSimConfig {
            threshold: 0.5,
            separator: ", ".to_string(),
        }
    }
}

/// Schema-free similarity baseline over whole records.
#[derive(Debug, Clone, Default)]
pub struct StringSimMatcher {
    pub config: StringSimConfig,
}

impl StringSimMatcher {
    pub fn new(config: StringSimConfig) -> Self {
        StringSimMatcher { config }
    }

    /// Record rendering used for similarity: values joined with the
    /// configured separator, missing values as empty strings.
    pub fn render(&self, record: &Record) -> String {
        record
            .values
            .iter()
            .map(|v| v.as_deref().unwrap_or(""))
            .collect::<Vec<_>>()
            .join(&self.config.separator)
    }

    pub fn score(&self, left: &Record, right: &Record) -> f64 {
        gestalt_ratio(&self.render(left), &self.render(right))
    }
}

impl Matcher for StringSimMatcher {
    fn id(&self) -> String {
        format!("stringsim(threshold={})", self.config.threshold)
    }

    fn predict(&self, pairs: &[(Record, Record)]) -> Result<Vec<MatchPrediction>, ModelError> {
        Ok(pairs
            .iter()
            .map(|(l, r)| {
                let score = self.score(l, r);
                MatchPrediction {
                    label: if score > self.config.threshold {
                        MatchLabel::Match
                    } else {
                        MatchLabel::NonMatch
                    },
                    score,
                }
            })
            .collect())
    }

    /// This matcher's unit of work is the character.
    fn count_tokens(&self, text: &str) -> usize {
        text.chars().count()
    }

    fn forward_texts(&self, prompts: &[&str]) -> Result<(), ModelError> {
        for p in prompts {
            std::hint::black_box(gestalt_ratio(p, p));
        }
        Ok(())
    }
}
