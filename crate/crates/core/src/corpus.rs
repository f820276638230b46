//! Fine-tuning corpus generation from transfer datasets.
//!
//! Given a set of labeled pair datasets and one excluded target, this module
//! assembles the training corpus for a zero-shot matcher:
//!
//! - **Record-level samples** per transfer dataset: small datasets are kept
//!   whole; large ones are filtered to at most `n_r` pairs, prioritizing
//!   positives the difficulty classifier got wrong and sampling twice as
//!   many negatives as positives. Each retained pair is serialized twice,
//!   original and left/right-flipped, with the twin adjacent in order.
//! - **Attribute-level samples** pooled across transfer datasets: value
//!   pairs grouped by normalized attribute name, balanced to equal positive
//!   and negative counts, capped at `n_a` per attribute.
//!
//! All randomness flows through one seeded generator with a documented draw
//! order (datasets in input order, then attribute groups in name order, then
//! the final mix shuffle), so a corpus is reproducible byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{LabeledPair, MatchLabel, PairDataset};
use crate::error::{ErrorClass, Fallible};
use crate::filter::{
    split_positives, train_difficulty_classifier, FilterError, FilterOptions, FilterReport,
};
use crate::serialize::{
    serialize_attribute_pair, serialize_record_pair, SerializationVariant, SerializeError,
};

/// Sample granularity: whole-record prompt or single-attribute prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Record,
    Attribute,
}

/// Training phase tag: phase 1 holds attribute-level samples, phase 2
/// record-level ones. Only sequential-mode training distinguishes them.
pub const PHASE_ATTRIBUTE: u8 = 1;
pub const PHASE_RECORD: u8 = 2;

/// One serialized training sample as stored in the corpus JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSample {
    pub text: String,
    pub label: MatchLabel,
    pub granularity: Granularity,
    pub flipped: bool,
    /// Name of the dataset the underlying pair came from.
    pub source: String,
    pub phase: u8,
}

/// How attribute-level samples participate in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeMode {
    /// Interleave attribute and record samples in one shuffled stream.
    #[default]
    Mix,
    /// Keep attribute samples first as a separate training phase.
    Sequential,
    /// No attribute-level samples.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Record-level pair budget per dataset (pre-flip).
    pub n_r: usize,
    /// Attribute-level sample cap per attribute.
    pub n_a: usize,
    pub seed: u64,
    pub enable_automl_filter: bool,
    pub enable_flip: bool,
    pub attribute_mode: AttributeMode,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n_r: 1200,
            n_a: 600,
            seed: 42,
            enable_automl_filter: true,
            enable_flip: true,
            attribute_mode: AttributeMode::Mix,
        }
    }
}

/// Per-dataset record-level generation outcome, kept for the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordGenStats {
    pub train_pairs: usize,
    pub retained_pairs: usize,
    pub positives: usize,
    pub negatives: usize,
    pub wrong_used: usize,
    pub filtered: bool,
    pub samples: usize,
}

/// The assembled fine-tuning corpus plus its generation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneCorpus {
    pub samples: Vec<CorpusSample>,
    pub config: GenerationConfig,
    pub excluded_target: String,
    pub variant: SerializationVariant,
    pub transfer_datasets: Vec<String>,
    pub record_stats: BTreeMap<String, RecordGenStats>,
    /// attribute name -> emitted sample count
    pub attribute_stats: BTreeMap<String, usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("target dataset {target:?} not found among inputs")]
    TargetNotFound { target: String },
    #[error("need at least one transfer dataset besides the target")]
    NoTransferDatasets,
    #[error("dataset {dataset:?} exceeds n_r={n_r} but has no positive pairs; cannot satisfy the 2:1 ratio")]
    NoPositives { dataset: String, n_r: usize },
    #[error("dataset {dataset:?} needs a difficulty report (|train| > n_r and the filter is enabled)")]
    MissingFilterReport { dataset: String },
    #[error("difficulty report is for dataset {report:?}, not {dataset:?}")]
    ReportMismatch { report: String, dataset: String },
    #[error("difficulty report indices are stale or out of range for dataset {dataset:?}")]
    ReportInvalid { dataset: String },
    #[error("n_r must be positive")]
    ZeroRecordBudget,
    #[error("validation fraction {fraction} is degenerate; need 0 < fraction < 1")]
    DegenerateFraction { fraction: f64 },
    #[error("corpus has {count} samples with label {label}; need at least 2 of each")]
    TooFewSamples { label: MatchLabel, count: usize },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Serialize(#[from] SerializeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} line {line}: {message}")]
    BadCorpusLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Fallible for CorpusError {
    fn class(&self) -> ErrorClass {
        match self {
            CorpusError::Io { .. } => ErrorClass::Runtime,
            CorpusError::Filter(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

/// Supplies difficulty reports to [`build_corpus_with`]; lets callers cache
/// them or inject synthetic partitions in tests.
pub trait FilterProvider {
    fn report(&mut self, dataset: &PairDataset) -> Result<FilterReport, CorpusError>;
}

/// Trains a fresh classifier per dataset.
pub struct FreshFilter {
    pub options: FilterOptions,
}

impl Default for FreshFilter {
    fn default() -> Self {
        FreshFilter {
            options: FilterOptions::default(),
        }
    }
}

impl FilterProvider for FreshFilter {
    fn report(&mut self, dataset: &PairDataset) -> Result<FilterReport, CorpusError> {
        let clf = train_difficulty_classifier(dataset, &self.options)?;
        Ok(split_positives(dataset, &clf)?)
    }
}

/// Caches reports as JSON files under a directory, keyed by dataset name and
/// invalidated by the train-split fingerprint.
pub struct CachingFilter {
    pub dir: PathBuf,
    pub options: FilterOptions,
}

impl FilterProvider for CachingFilter {
    fn report(&mut self, dataset: &PairDataset) -> Result<FilterReport, CorpusError> {
        let path = self.dir.join(format!("{}.json", dataset.name));
        let expected_hash = crate::filter::train_hash(dataset);
        if let Ok(raw) = fs::read_to_string(&path) {
            if let Ok(report) = serde_json::from_str::<FilterReport>(&raw) {
                if report.dataset == dataset.name && report.train_hash == expected_hash {
                    log::debug!("difficulty report for {} loaded from cache", dataset.name);
                    return Ok(report);
                }
            }
            log::info!("cached difficulty report for {} is stale; refitting", dataset.name);
        }
        let report = FreshFilter {
            options: self.options.clone(),
        }
        .report(dataset)?;
        fs::create_dir_all(&self.dir).map_err(|source| CorpusError::Io {
            path: self.dir.clone(),
            source,
        })?;
        let body = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(&path, body).map_err(|source| CorpusError::Io { path, source })?;
        Ok(report)
    }
}

fn validate_report(
    dataset: &PairDataset,
    report: &FilterReport,
) -> Result<(), CorpusError> {
    if report.dataset != dataset.name {
        return Err(CorpusError::ReportMismatch {
            report: report.dataset.clone(),
            dataset: dataset.name.clone(),
        });
    }
    let positives: Vec<usize> = dataset
        .train
        .iter()
        .enumerate()
        .filter(|(_, p)| p.label.is_match())
        .map(|(i, _)| i)
        .collect();
    let mut claimed: Vec<usize> = report
        .wrong
        .iter()
        .chain(&report.correct)
        .copied()
        .collect();
    claimed.sort_unstable();
    if claimed != positives {
        return Err(CorpusError::ReportInvalid {
            dataset: dataset.name.clone(),
        });
    }
    Ok(())
}

/// Sample `amount` distinct items from `pool` uniformly, returned in the
/// pool's original order.
fn sample_sorted(pool: &[usize], amount: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    debug_assert!(amount <= pool.len());
    if amount == pool.len() {
        return pool.to_vec();
    }
    let mut picked: Vec<usize> =
        rand::seq::index::sample(rng, pool.len(), amount)
            .into_iter()
            .map(|i| pool[i])
            .collect();
    picked.sort_unstable();
    picked
}

fn emit_record_pair(
    pair: &LabeledPair,
    dataset: &str,
    cfg: &GenerationConfig,
    variant: &SerializationVariant,
    out: &mut Vec<CorpusSample>,
) -> Result<(), CorpusError> {
    let text = serialize_record_pair(&pair.left.values, &pair.right.values, variant)?;
    out.push(CorpusSample {
        text,
        label: pair.label,
        granularity: Granularity::Record,
        flipped: false,
        source: dataset.to_string(),
        phase: PHASE_RECORD,
    });
    if cfg.enable_flip {
        let text = serialize_record_pair(&pair.right.values, &pair.left.values, variant)?;
        out.push(CorpusSample {
            text,
            label: pair.label,
            granularity: Granularity::Record,
            flipped: true,
            source: dataset.to_string(),
            phase: PHASE_RECORD,
        });
    }
    Ok(())
}

/// Record-level samples for one transfer dataset.
///
/// Small datasets (`|train| ≤ n_r`) are retained whole. Larger ones are cut
/// to at most `n_r` pairs: up to `floor(n_r/3)` positives — all misclassified
/// ones first, topped up with correctly classified ones — plus twice as many
/// negatives, sampled uniformly. `filter_report` is required exactly when the
/// dataset overflows `n_r` and the difficulty filter is enabled.
pub fn gen_recordlevel(
    dataset: &PairDataset,
    cfg: &GenerationConfig,
    filter_report: Option<&FilterReport>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<CorpusSample>, RecordGenStats), CorpusError> {
    if cfg.n_r == 0 {
        return Err(CorpusError::ZeroRecordBudget);
    }
    let variant = SerializationVariant::default();
    gen_recordlevel_with_variant(dataset, cfg, filter_report, &variant, rng)
}

pub fn gen_recordlevel_with_variant(
    dataset: &PairDataset,
    cfg: &GenerationConfig,
    filter_report: Option<&FilterReport>,
    variant: &SerializationVariant,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<CorpusSample>, RecordGenStats), CorpusError> {
    if cfg.n_r == 0 {
        return Err(CorpusError::ZeroRecordBudget);
    }
    let train = &dataset.train;
    let mut out = Vec::new();

    if train.len() <= cfg.n_r {
        // Tiny dataset: keep everything, no filtering or ratio control.
        for pair in train {
            emit_record_pair(pair, &dataset.name, cfg, variant, &mut out)?;
        }
        let positives = train.iter().filter(|p| p.label.is_match()).count();
        let stats = RecordGenStats {
            train_pairs: train.len(),
            retained_pairs: train.len(),
            positives,
            negatives: train.len() - positives,
            wrong_used: 0,
            filtered: false,
            samples: out.len(),
        };
        return Ok((out, stats));
    }

    let positives: Vec<usize> = train
        .iter()
        .enumerate()
        .filter(|(_, p)| p.label.is_match())
        .map(|(i, _)| i)
        .collect();
    let negatives: Vec<usize> = train
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.label.is_match())
        .map(|(i, _)| i)
        .collect();
    if positives.is_empty() {
        return Err(CorpusError::NoPositives {
            dataset: dataset.name.clone(),
            n_r: cfg.n_r,
        });
    }

    let n_p = cfg.n_r / 3;
    let n_plus = positives.len().min(n_p);

    // Difficult positives first, topped up with easy ones.
    let (wrong, correct): (Vec<usize>, Vec<usize>) = if cfg.enable_automl_filter {
        let report = filter_report.ok_or_else(|| CorpusError::MissingFilterReport {
            dataset: dataset.name.clone(),
        })?;
        validate_report(dataset, report)?;
        (report.wrong.clone(), report.correct.clone())
    } else {
        (Vec::new(), positives.clone())
    };
    let mut chosen_pos: Vec<usize>;
    let wrong_used;
    if wrong.len() >= n_plus {
        chosen_pos = sample_sorted(&wrong, n_plus, rng);
        wrong_used = n_plus;
    } else {
        chosen_pos = wrong.clone();
        wrong_used = wrong.len();
        let top_up = sample_sorted(&correct, n_plus - wrong.len(), rng);
        chosen_pos.extend(top_up);
        chosen_pos.sort_unstable();
    }

    let n_minus = (2 * n_plus).min(negatives.len());
    if n_minus < 2 * n_plus {
        log::warn!(
            "dataset {}: only {} negatives available for {} positives (wanted {})",
            dataset.name,
            n_minus,
            n_plus,
            2 * n_plus
        );
    }
    let chosen_neg = sample_sorted(&negatives, n_minus, rng);

    // Emit in train-row order regardless of class.
    let mut chosen: Vec<usize> = chosen_pos.iter().chain(&chosen_neg).copied().collect();
    chosen.sort_unstable();
    for &i in &chosen {
        emit_record_pair(&train[i], &dataset.name, cfg, variant, &mut out)?;
    }
    let stats = RecordGenStats {
        train_pairs: train.len(),
        retained_pairs: chosen.len(),
        positives: n_plus,
        negatives: n_minus,
        wrong_used,
        filtered: true,
        samples: out.len(),
    };
    Ok((out, stats))
}

/// One attribute's pooled labeled value pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeGroup {
    pub attribute: String,
    /// (left value, right value, label, source dataset)
    pub pairs: Vec<(Option<String>, Option<String>, MatchLabel, String)>,
}

/// Pool train-split value pairs by attribute name (trimmed,
/// case-insensitive) across datasets. Pairs with both values missing are
/// dropped here, before any balancing. Groups come back sorted by name.
pub fn collect_attribute_groups(datasets: &[&PairDataset]) -> Vec<AttributeGroup> {
    let mut groups: BTreeMap<String, Vec<(Option<String>, Option<String>, MatchLabel, String)>> =
        BTreeMap::new();
    for dataset in datasets {
        for pair in &dataset.train {
            for (i, attr) in dataset.attributes.iter().enumerate() {
                let l = pair.left.values.get(i).cloned().flatten();
                let r = pair.right.values.get(i).cloned().flatten();
                if l.is_none() && r.is_none() {
                    continue;
                }
                groups.entry(crate::data::normalize_attribute(attr)).or_default().push((
                    l,
                    r,
                    pair.label,
                    dataset.name.clone(),
                ));
            }
        }
    }
    groups
        .into_iter()
        .map(|(attribute, pairs)| AttributeGroup { attribute, pairs })
        .collect()
}

/// Attribute-level samples across all transfer datasets: per attribute,
/// equal numbers of positive and negative value pairs, at most `n_a` total.
pub fn gen_attributelevel(
    datasets: &[&PairDataset],
    cfg: &GenerationConfig,
    variant: &SerializationVariant,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<CorpusSample>, BTreeMap<String, usize>), CorpusError> {
    let mut out = Vec::new();
    let mut stats = BTreeMap::new();
    for group in collect_attribute_groups(datasets) {
        let pos: Vec<usize> = group
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.2.is_match())
            .map(|(i, _)| i)
            .collect();
        let neg: Vec<usize> = group
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.2.is_match())
            .map(|(i, _)| i)
            .collect();
        let mut per_class = pos.len().min(neg.len());
        if 2 * per_class > cfg.n_a {
            per_class = cfg.n_a / 2;
        }
        if per_class == 0 {
            continue;
        }
        let chosen_pos = sample_sorted(&pos, per_class, rng);
        let chosen_neg = sample_sorted(&neg, per_class, rng);
        let mut chosen: Vec<usize> = chosen_pos.iter().chain(&chosen_neg).copied().collect();
        chosen.sort_unstable();
        for &i in &chosen {
            let (l, r, label, source) = &group.pairs[i];
            let text =
                serialize_attribute_pair(l.as_deref(), r.as_deref(), Some(&group.attribute), variant)?;
            out.push(CorpusSample {
                text,
                label: *label,
                granularity: Granularity::Attribute,
                flipped: false,
                source: source.clone(),
                phase: PHASE_ATTRIBUTE,
            });
        }
        stats.insert(group.attribute, 2 * per_class);
    }
    Ok((out, stats))
}

/// Indivisible shuffle unit: a record sample with its flipped twin, or a
/// single sample. Twins never separate, so they land on the same side of any
/// later split.
fn into_blocks(samples: Vec<CorpusSample>) -> Vec<Vec<CorpusSample>> {
    let mut blocks = Vec::new();
    let mut iter = samples.into_iter().peekable();
    while let Some(s) = iter.next() {
        let twin = match iter.peek() {
            Some(next) if !s.flipped && next.flipped && next.source == s.source => true,
            _ => false,
        };
        if twin {
            let next = iter.next().expect("peeked");
            blocks.push(vec![s, next]);
        } else {
            blocks.push(vec![s]);
        }
    }
    blocks
}

/// Build the corpus for `target`, training difficulty classifiers on the fly
/// where needed. Use [`build_corpus_with`] to control report provenance.
pub fn build_corpus(
    datasets: &[PairDataset],
    target: &str,
    cfg: &GenerationConfig,
    variant: &SerializationVariant,
) -> Result<FineTuneCorpus, CorpusError> {
    build_corpus_with(datasets, target, cfg, variant, &mut FreshFilter::default())
}

pub fn build_corpus_with(
    datasets: &[PairDataset],
    target: &str,
    cfg: &GenerationConfig,
    variant: &SerializationVariant,
    filters: &mut dyn FilterProvider,
) -> Result<FineTuneCorpus, CorpusError> {
    if cfg.n_r == 0 {
        return Err(CorpusError::ZeroRecordBudget);
    }
    if !datasets.iter().any(|d| d.name == target) {
        return Err(CorpusError::TargetNotFound {
            target: target.to_string(),
        });
    }
    let transfer: Vec<&PairDataset> = datasets.iter().filter(|d| d.name != target).collect();
    if transfer.is_empty() {
        return Err(CorpusError::NoTransferDatasets);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut record_samples: Vec<CorpusSample> = Vec::new();
    let mut record_stats = BTreeMap::new();
    for dataset in &transfer {
        let report = if cfg.enable_automl_filter && dataset.train.len() > cfg.n_r {
            Some(filters.report(dataset)?)
        } else {
            None
        };
        let (samples, stats) =
            gen_recordlevel_with_variant(dataset, cfg, report.as_ref(), variant, &mut rng)?;
        record_samples.extend(samples);
        record_stats.insert(dataset.name.clone(), stats);
    }

    let (attribute_samples, attribute_stats) = match cfg.attribute_mode {
        AttributeMode::Off => (Vec::new(), BTreeMap::new()),
        _ => gen_attributelevel(&transfer, cfg, variant, &mut rng)?,
    };

    let samples = match cfg.attribute_mode {
        AttributeMode::Mix => {
            let mut blocks = into_blocks(record_samples);
            blocks.extend(attribute_samples.into_iter().map(|s| vec![s]));
            blocks.shuffle(&mut rng);
            blocks.into_iter().flatten().collect()
        }
        AttributeMode::Sequential => {
            // Phase-1 block first, then shuffled record blocks.
            let mut attr = attribute_samples;
            attr.shuffle(&mut rng);
            let mut blocks = into_blocks(record_samples);
            blocks.shuffle(&mut rng);
            attr.into_iter()
                .chain(blocks.into_iter().flatten())
                .collect()
        }
        AttributeMode::Off => {
            let mut blocks = into_blocks(record_samples);
            blocks.shuffle(&mut rng);
            blocks.into_iter().flatten().collect()
        }
    };

    Ok(FineTuneCorpus {
        samples,
        config: cfg.clone(),
        excluded_target: target.to_string(),
        variant: *variant,
        transfer_datasets: transfer.iter().map(|d| d.name.clone()).collect(),
        record_stats,
        attribute_stats,
    })
}

/// Stratified train/validation split of a corpus. Per label, the validation
/// side receives `floor(fraction * count)` samples, off by at most one when
/// flip-twin blocks make the exact count unreachable; twins never straddle
/// the split. Order within each side follows the corpus order.
pub fn split_validation(
    corpus: &FineTuneCorpus,
    fraction: f64,
) -> Result<(Vec<CorpusSample>, Vec<CorpusSample>), CorpusError> {
    split_validation_seeded(corpus, fraction, corpus.config.seed)
}

pub fn split_validation_seeded(
    corpus: &FineTuneCorpus,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<CorpusSample>, Vec<CorpusSample>), CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::DegenerateFraction { fraction });
    }
    for label in [MatchLabel::Match, MatchLabel::NonMatch] {
        let count = corpus.samples.iter().filter(|s| s.label == label).count();
        if count < 2 {
            return Err(CorpusError::TooFewSamples { label, count });
        }
    }

    let blocks = into_blocks(corpus.samples.clone());
    let mut targets: BTreeMap<u8, usize> = BTreeMap::new();
    for label in [MatchLabel::NonMatch, MatchLabel::Match] {
        let count = corpus.samples.iter().filter(|s| s.label == label).count();
        targets.insert(label.as_u8(), (fraction * count as f64).floor() as usize);
    }

    // Visit blocks in a seeded random order; blocks are label-homogeneous
    // (twins share a label), so stratification works per block.
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    // Distinct stream from generation so reusing the corpus seed is safe.
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);

    let mut in_valid = vec![false; blocks.len()];
    let mut placed: BTreeMap<u8, usize> = BTreeMap::new();
    for &bi in &order {
        let label = blocks[bi][0].label.as_u8();
        let target = targets[&label];
        let have = *placed.get(&label).unwrap_or(&0);
        if have >= target {
            continue;
        }
        let size = blocks[bi].len();
        // Place if it fits, or if overshooting by taking it leaves us closer
        // to the target than stopping short would.
        if have + size <= target || (have + size) - target < target - have {
            in_valid[bi] = true;
            *placed.entry(label).or_insert(0) += size;
        }
    }

    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (bi, block) in blocks.into_iter().enumerate() {
        if in_valid[bi] {
            valid.extend(block);
        } else {
            train.extend(block);
        }
    }
    Ok((train, valid))
}

fn sample_line(sample: &CorpusSample) -> String {
    serde_json::to_string(sample).expect("sample serializes")
}

/// SHA-256 over the corpus's JSONL rendering; recorded in checkpoint
/// provenance so a checkpoint can be tied to its exact training data.
pub fn corpus_hash(corpus: &FineTuneCorpus) -> String {
    let mut hasher = Sha256::new();
    for sample in &corpus.samples {
        hasher.update(sample_line(sample).as_bytes());
        hasher.update(b"\n");
    }
    format!("{:x}", hasher.finalize())
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusSidecar {
    config: GenerationConfig,
    excluded_target: String,
    variant: String,
    transfer_datasets: Vec<String>,
    record_stats: BTreeMap<String, RecordGenStats>,
    attribute_stats: BTreeMap<String, usize>,
    total_samples: usize,
    positives: usize,
    negatives: usize,
    sha256: String,
}

/// Write the corpus as JSONL plus a `<file>.manifest.json` sidecar with the
/// generation config and counts.
pub fn write_corpus(corpus: &FineTuneCorpus, path: &Path) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| CorpusError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    let file = fs::File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = io::BufWriter::new(file);
    for sample in &corpus.samples {
        writeln!(w, "{}", sample_line(sample)).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    w.flush().map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let positives = corpus
        .samples
        .iter()
        .filter(|s| s.label.is_match())
        .count();
    let sidecar = CorpusSidecar {
        config: corpus.config.clone(),
        excluded_target: corpus.excluded_target.clone(),
        variant: corpus.variant.to_string(),
        transfer_datasets: corpus.transfer_datasets.clone(),
        record_stats: corpus.record_stats.clone(),
        attribute_stats: corpus.attribute_stats.clone(),
        total_samples: corpus.samples.len(),
        positives,
        negatives: corpus.samples.len() - positives,
        sha256: corpus_hash(corpus),
    };
    let sidecar_file = sidecar_path(path);
    fs::write(
        &sidecar_file,
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(|source| CorpusError::Io {
        path: sidecar_file,
        source,
    })?;
    Ok(())
}

/// Read a corpus JSONL back. The sidecar, when present, restores generation
/// metadata; otherwise defaults are assumed and a warning logged.
pub fn read_corpus(path: &Path) -> Result<FineTuneCorpus, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut samples = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: CorpusSample =
            serde_json::from_str(&line).map_err(|e| CorpusError::BadCorpusLine {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        samples.push(sample);
    }

    let sidecar_file = sidecar_path(path);
    let (config, excluded_target, variant, transfer, record_stats, attribute_stats) =
        match fs::read_to_string(&sidecar_file) {
            Ok(raw) => {
                let sc: CorpusSidecar =
                    serde_json::from_str(&raw).map_err(|e| CorpusError::BadCorpusLine {
                        path: sidecar_file.clone(),
                        line: 0,
                        message: e.to_string(),
                    })?;
                let variant = sc
                    .variant
                    .parse::<SerializationVariant>()
                    .map_err(CorpusError::Serialize)?;
                (
                    sc.config,
                    sc.excluded_target,
                    variant,
                    sc.transfer_datasets,
                    sc.record_stats,
                    sc.attribute_stats,
                )
            }
            Err(_) => {
                log::warn!(
                    "{}: no sidecar manifest; assuming default generation config",
                    path.display()
                );
                (
                    GenerationConfig::default(),
                    String::new(),
                    SerializationVariant::default(),
                    Vec::new(),
                    BTreeMap::new(),
                    BTreeMap::new(),
                )
            }
        };
    Ok(FineTuneCorpus {
        samples,
        config,
        excluded_target,
        variant,
        transfer_datasets: transfer,
        record_stats,
        attribute_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;

    fn tiny_dataset(name: &str, n_pos: usize, n_neg: usize) -> PairDataset {
        let mut train = Vec::new();
        for i in 0..n_pos {
            let v = format!("{name}-p{i}");
            train.push(LabeledPair::new(
                Record::from_strs(&[&v]),
                Record::from_strs(&[&v]),
                MatchLabel::Match,
            ));
        }
        for i in 0..n_neg {
            train.push(LabeledPair::new(
                Record::from_strs(&[&format!("{name}-nl{i}")]),
                Record::from_strs(&[&format!("{name}-nr{i}")]),
                MatchLabel::NonMatch,
            ));
        }
        PairDataset {
            name: name.to_string(),
            domain: "test".into(),
            attributes: vec!["value".into()],
            train,
            valid: vec![],
            test: vec![],
        }
    }

    #[test]
    fn tiny_branch_keeps_all_pairs_and_flips() {
        let d = tiny_dataset("beer-sized", 150, 300);
        let cfg = GenerationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (samples, stats) = gen_recordlevel(&d, &cfg, None, &mut rng).unwrap();
        assert_eq!(stats.retained_pairs, 450);
        assert!(!stats.filtered);
        assert_eq!(samples.len(), 900);
    }

    #[test]
    fn flip_disabled_emits_single_samples() {
        let d = tiny_dataset("d", 3, 6);
        let cfg = GenerationConfig {
            enable_flip: false,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (samples, _) = gen_recordlevel(&d, &cfg, None, &mut rng).unwrap();
        assert_eq!(samples.len(), 9);
        assert!(samples.iter().all(|s| !s.flipped));
    }

    #[test]
    fn blocks_pair_originals_with_twins() {
        let d = tiny_dataset("d", 2, 2);
        let cfg = GenerationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (samples, _) = gen_recordlevel(&d, &cfg, None, &mut rng).unwrap();
        let blocks = into_blocks(samples);
        assert_eq!(blocks.len(), 4);
        for block in blocks {
            assert_eq!(block.len(), 2);
            assert!(!block[0].flipped);
            assert!(block[1].flipped);
            assert_eq!(block[0].label, block[1].label);
        }
    }

    #[test]
    fn sidecar_path_appends_suffix() {
        assert_eq!(
            sidecar_path(Path::new("/tmp/x/corpus.jsonl")),
            PathBuf::from("/tmp/x/corpus.jsonl.manifest.json")
        );
    }
}
