//! Inference throughput and deployment-cost accounting: exponential
//! batch-size search, tokens-per-second measurement over repeated batches,
//! and a dollars-per-1,000-tokens estimate comparable against API pricing.
//!
//! The cost formula is exact and rounding happens only at display time
//! (two significant figures). Token counts come from the matcher's own
//! tokenizer applied to the actual benchmark prompts.

use std::cmp::Ordering;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ErrorClass, Fallible};
use crate::model::{Matcher, ModelError};

pub const DEFAULT_BATCH_CEILING: usize = 8192;
pub const DEFAULT_TIMED_BATCHES: usize = 100;
const WARMUP_BATCHES: usize = 3;

#[derive(Debug, Error)]
pub enum PerfError {
    #[error("model does not fit at batch size 1: {cause}")]
    DoesNotFit { cause: String },
    #[error("timing anomaly: zero elapsed time across {batches} batches")]
    TimingAnomaly { batches: usize },
    #[error("{name} must be positive (got {value})")]
    NonPositiveInput { name: String, value: f64 },
    #[error("no benchmark prompts provided")]
    NoPrompts,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl Fallible for PerfError {
    fn class(&self) -> ErrorClass {
        match self {
            PerfError::Io(_) | PerfError::Json(_) | PerfError::TimingAnomaly { .. } => {
                ErrorClass::Runtime
            }
            PerfError::Model(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSearchReport {
    /// Largest probed batch size that succeeded.
    pub max_batch_size: usize,
    pub ceiling: usize,
    /// True when the search stopped at the ceiling rather than a failure.
    pub ceiling_reached: bool,
    /// `(batch_size, succeeded)` in probe order.
    pub probed: Vec<(usize, bool)>,
}

/// Exponential batch search driven by an arbitrary probe; the public
/// entry points wrap a matcher forward pass, tests can inject failures.
/// Ok = the batch ran; Err carries the failure cause.
pub fn find_max_batch_size_with(
    mut probe: impl FnMut(usize) -> Result<(), String>,
    ceiling: usize,
) -> Result<BatchSearchReport, PerfError> {
    let ceiling = ceiling.max(1);
    let mut probed = Vec::new();
    let mut best = 0usize;
    let mut b = 1usize;
    loop {
        match probe(b) {
            Ok(()) => {
                probed.push((b, true));
                best = b;
                if b >= ceiling {
                    return Ok(BatchSearchReport {
                        max_batch_size: best,
                        ceiling,
                        ceiling_reached: true,
                        probed,
                    });
                }
                b = (b * 2).min(ceiling);
            }
            Err(cause) => {
                probed.push((b, false));
                if best == 0 {
                    return Err(PerfError::DoesNotFit { cause });
                }
                return Ok(BatchSearchReport {
                    max_batch_size: best,
                    ceiling,
                    ceiling_reached: false,
                    probed,
                });
            }
        }
    }
}

/// Largest power of two (up to `ceiling`) at which one forward pass over
/// copies of `probe_prompt` succeeds.
pub fn find_max_batch_size_bounded(
    matcher: &dyn Matcher,
    probe_prompt: &str,
    ceiling: usize,
) -> Result<BatchSearchReport, PerfError> {
    find_max_batch_size_with(
        |b| {
            let prompts = vec![probe_prompt; b];
            matcher.forward_texts(&prompts).map_err(|e| e.to_string())
        },
        ceiling,
    )
}

pub fn find_max_batch_size(
    matcher: &dyn Matcher,
    probe_prompt: &str,
) -> Result<BatchSearchReport, PerfError> {
    find_max_batch_size_bounded(matcher, probe_prompt, DEFAULT_BATCH_CEILING)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub model_id: String,
    /// Batch size the measurement ran at.
    pub max_batch_size: usize,
    pub tokens_per_second: f64,
    pub batches_timed: usize,
    pub tokens_processed: usize,
    pub seconds_elapsed: f64,
    pub gpus_used: usize,
    /// Scale-out factor recorded for downstream cost extrapolation.
    pub extrapolation_factor: f64,
    /// Single-batch measurements are too noisy to trust.
    pub low_confidence: bool,
    /// Per-batch forward durations in seconds, in timing order.
    pub batch_seconds: Vec<f64>,
}

/// Deterministic prompt generator for dataset-free benchmarking.
pub fn synthetic_prompts(count: usize, approx_len: usize, seed: u64) -> Vec<String> {
    let alphabet: Vec<char> = ('a'..='z').chain('0'..='9').chain([' ', ',']).collect();
    let mut state = seed | 1;
    (0..count)
        .map(|_| {
            let mut s = String::with_capacity(approx_len);
            while s.len() < approx_len {
                state = state
                    .wrapping_mul(6_364_136_223_846_793_005)
                    .wrapping_add(1_442_695_040_888_963_407);
                s.push(alphabet[(state >> 33) as usize % alphabet.len()]);
            }
            s
        })
        .collect()
}

/// Time `n_batches` forward passes of `batch_size` prompts (cycled from
/// `prompts`) after untimed warmup; tokens/s = tokens processed divided by
/// the summed forward durations.
pub fn measure_throughput(
    matcher: &dyn Matcher,
    prompts: &[String],
    batch_size: usize,
    n_batches: usize,
) -> Result<ThroughputReport, PerfError> {
    if prompts.is_empty() {
        return Err(PerfError::NoPrompts);
    }
    if batch_size == 0 {
        return Err(PerfError::NonPositiveInput {
            name: "batch_size".to_string(),
            value: 0.0,
        });
    }
    if n_batches == 0 {
        return Err(PerfError::NonPositiveInput {
            name: "n_batches".to_string(),
            value: 0.0,
        });
    }
    let batch_at = |index: usize| -> Vec<&str> {
        (0..batch_size)
            .map(|j| prompts[(index * batch_size + j) % prompts.len()].as_str())
            .collect()
    };
    for w in 0..WARMUP_BATCHES {
        matcher.forward_texts(&batch_at(w))?;
    }
    let mut batch_seconds = Vec::with_capacity(n_batches);
    let mut tokens_processed = 0usize;
    for k in 0..n_batches {
        let batch = batch_at(k);
        tokens_processed += batch.iter().map(|p| matcher.count_tokens(p)).sum::<usize>();
        let start = Instant::now();
        matcher.forward_texts(&batch)?;
        batch_seconds.push(start.elapsed().as_secs_f64());
    }
    let seconds_elapsed: f64 = batch_seconds.iter().sum();
    if seconds_elapsed <= 0.0 {
        return Err(PerfError::TimingAnomaly { batches: n_batches });
    }
    Ok(ThroughputReport {
        model_id: matcher.id(),
        max_batch_size: batch_size,
        tokens_per_second: tokens_processed as f64 / seconds_elapsed,
        batches_timed: n_batches,
        tokens_processed,
        seconds_elapsed,
        gpus_used: 0,
        extrapolation_factor: 2.0,
        low_confidence: n_batches < 2,
        batch_seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub hourly_price: f64,
    pub tokens_per_second: f64,
    pub extrapolation_factor: f64,
    /// Exact value of `(p / (factor * t_m * 3600)) * 1000`.
    pub cost_per_1k_tokens: f64,
}

impl CostEstimate {
    /// Display-rounded dollar string with two significant figures, e.g.
    /// `$0.0000038`.
    pub fn display_cost(&self) -> String {
        format!("${}", format_two_significant(self.cost_per_1k_tokens))
    }
}

fn format_two_significant(v: f64) -> String {
    if v <= 0.0 || !v.is_finite() {
        return "0".to_string();
    }
    let magnitude = v.log10().floor() as i32;
    let decimals = (1 - magnitude).max(0) as usize;
    let scale = 10f64.powi(1 - magnitude);
    let rounded = (v * scale).round() / scale;
    format!("{rounded:.decimals$}")
}

/// Dollars per 1,000 tokens for a machine at `hourly_price` dollars/hour
/// sustaining `tokens_per_second`, scaled out by `extrapolation_factor`.
pub fn estimate_cost(
    tokens_per_second: f64,
    hourly_price: f64,
    extrapolation_factor: f64,
) -> Result<CostEstimate, PerfError> {
    for (name, value) in [
        ("tokens_per_second", tokens_per_second),
        ("hourly_price", hourly_price),
        ("extrapolation_factor", extrapolation_factor),
    ] {
        if !(value > 0.0) {
            return Err(PerfError::NonPositiveInput {
                name: name.to_string(),
                value,
            });
        }
    }
    let cost = hourly_price / (extrapolation_factor * tokens_per_second * 3600.0) * 1000.0;
    Ok(CostEstimate {
        hourly_price,
        tokens_per_second,
        extrapolation_factor,
        cost_per_1k_tokens: cost,
    })
}

pub fn estimate_cost_from_report(
    report: &ThroughputReport,
    hourly_price: f64,
    extrapolation_factor: f64,
) -> Result<CostEstimate, PerfError> {
    estimate_cost(report.tokens_per_second, hourly_price, extrapolation_factor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingEntry {
    pub name: String,
    pub dollars_per_1k_tokens: f64,
    pub scenario: String,
}

/// API price constants, versioned so drifting prices stay auditable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingTable {
    pub version: String,
    /// When the prices were retrieved; the builtin table ships fixed
    /// comparison constants rather than live quotes.
    pub retrieved: String,
    pub entries: Vec<PricingEntry>,
}

impl PricingTable {
    pub fn builtin() -> Self {
        let entry = |name: &str, price: f64, scenario: &str| PricingEntry {
            name: name.to_string(),
            dollars_per_1k_tokens: price,
            scenario: scenario.to_string(),
        };
        PricingTable {
            version: "builtin-1".to_string(),
            retrieved: "shipped constants (not live quotes)".to_string(),
            entries: vec![
                entry("gpt-4", 0.015, "commercial API, batch input"),
                entry("gpt-3.5-turbo-06", 0.00075, "commercial API, batch input"),
                entry("together-70b", 0.0009, "hosted open-weight API"),
            ],
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, PerfError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn empty() -> Self {
        PricingTable {
            version: "empty".to_string(),
            retrieved: String::new(),
            entries: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingRow {
    pub name: String,
    pub dollars_per_1k_tokens: f64,
    pub scenario: String,
}

/// Merge self-hosted estimates with API prices into one table sorted by
/// cost, most expensive first; equal costs order by name.
pub fn compare_pricing(
    estimates: &[(String, CostEstimate)],
    api_prices: &PricingTable,
) -> Vec<PricingRow> {
    let mut rows: Vec<PricingRow> = estimates
        .iter()
        .map(|(name, est)| PricingRow {
            name: name.clone(),
            dollars_per_1k_tokens: est.cost_per_1k_tokens,
            scenario: "self-hosted".to_string(),
        })
        .collect();
    rows.extend(api_prices.entries.iter().map(|e| PricingRow {
        name: e.name.clone(),
        dollars_per_1k_tokens: e.dollars_per_1k_tokens,
        scenario: e.scenario.clone(),
    }));
    rows.sort_by(|a, b| {
        b.dollars_per_1k_tokens
            .partial_cmp(&a.dollars_per_1k_tokens)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.name.cmp(&b.name))
    });
    rows
}
