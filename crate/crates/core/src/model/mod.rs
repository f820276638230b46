//! Transformer-based record-pair matcher: base-model presets, fine-tuning
//! on a generated corpus, batched prediction, and checkpoint I/O.
//!
//! The default base model is a 124M-parameter decoder-only transformer.
//! Pretrained weights for it are not bundled; point the `TM_BASE_WEIGHTS`
//! environment variable at a safetensors file laid out like this crate's
//! parameter tree to use them. The compact presets train from scratch and
//! exist for ablations and for hardware that cannot fit the full model.

mod net;
mod tokenizer;
mod train;

pub use net::{seeded_init, varmap_param_count, HeadWiring, ModelConfig, ModelFamily, Net};
pub use tokenizer::{ByteTokenizer, TruncationSide, BYTE_VOCAB};
pub use train::{LossCurve, TrainConfig, TrainPhase, TrainReport};

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use candle_core::{DType, Device};
use candle_nn::{VarBuilder, VarMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    corpus_hash, split_validation_seeded, AttributeMode, CorpusError, CorpusSample,
    FineTuneCorpus, PHASE_ATTRIBUTE, PHASE_RECORD,
};
use crate::data::{MatchLabel, Record};
use crate::error::{ErrorClass, Fallible};
use crate::serialize::{
    serialize_record_pair, serialize_record_pair_named, QuestionPosition, SerializationVariant,
    SerializeError,
};

pub const DEFAULT_BASE_MODEL: &str = "gpt2-124m";
pub const BASE_MODEL_PRESETS: [&str; 5] = [
    "gpt2-124m",
    "decoder-compact",
    "decoder-tiny",
    "encoder-compact",
    "encdec-compact",
];

/// Auto batch mode probes powers of two up to this ceiling. CPU allocators
/// abort instead of reporting exhaustion, so the in-training probe stays
/// conservative; the explicit batch search in [`crate::perf`] takes a
/// caller-chosen ceiling for accelerator sweeps.
const AUTO_BATCH_CEILING: usize = 64;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Serialize(#[from] SerializeError),
    #[error("fine-tuning corpus is empty")]
    EmptyCorpus,
    #[error("bad training config: {reason}")]
    BadTrainConfig { reason: String },
    #[error("unknown base model `{name}`; expected one of: {expected}")]
    UnknownPreset { name: String, expected: String },
    #[error(
        "base model `{preset}` requires pretrained weights; set TM_BASE_WEIGHTS to a \
         safetensors file matching its parameter tree"
    )]
    PretrainedWeightsRequired { preset: String },
    #[error("training phase `{phase}` has no samples")]
    EmptyTrainingSet { phase: String },
    #[error("sequence of {tokens} tokens exceeds the model context of {context}")]
    ContextOverflow { tokens: usize, context: usize },
    #[error(
        "pair {pair_index}: prompt needs {tokens} tokens even with every value emptied, \
         over the limit of {limit}"
    )]
    SequenceTooLong {
        pair_index: usize,
        tokens: usize,
        limit: usize,
    },
    #[error("checkpoint at {path}: {reason}")]
    CheckpointInvalid { path: String, reason: String },
    #[error("matcher `{matcher}` has no batched forward pass to probe")]
    ProbingUnsupported { matcher: String },
}

impl Fallible for ModelError {
    fn class(&self) -> ErrorClass {
        match self {
            ModelError::Candle(_) | ModelError::Io(_) | ModelError::Json(_) => ErrorClass::Runtime,
            ModelError::Corpus(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

/// Inference batch size: a fixed count, or the largest power of two that
/// fits the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    Auto,
    Fixed(usize),
}

impl Default for BatchSize {
    fn default() -> Self {
        BatchSize::Fixed(16)
    }
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::Auto => write!(f, "auto"),
            BatchSize::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for BatchSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(BatchSize::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(BatchSize::Fixed(n)),
            _ => Err(format!("expected `auto` or a positive integer, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPrediction {
    pub label: MatchLabel,
    /// Match-class probability in [0, 1].
    pub score: f64,
}

impl MatchPrediction {
    /// Label and score are coupled: match iff `score >= 0.5`.
    pub fn from_score(score: f64) -> Self {
        MatchPrediction {
            label: if score >= 0.5 {
                MatchLabel::Match
            } else {
                MatchLabel::NonMatch
            },
            score,
        }
    }
}

/// A record-pair matcher: the fine-tuned model, the string-similarity
/// baseline, or any future alternative.
pub trait Matcher {
    fn id(&self) -> String;

    /// One prediction per pair, order-preserving; empty input gives empty
    /// output.
    fn predict(&self, pairs: &[(Record, Record)]) -> Result<Vec<MatchPrediction>, ModelError>;

    /// Dataset names whose labeled pairs influenced this matcher's
    /// parameters; `None` when nothing was learned from labels.
    fn training_sources(&self) -> Option<&[String]> {
        None
    }

    /// Work units this matcher processes for `text`; throughput accounting
    /// divides these by wall time. Defaults to the byte length.
    fn count_tokens(&self, text: &str) -> usize {
        text.len()
    }

    /// One batched forward pass over pre-serialized prompts, without
    /// prediction post-processing; the memory-probing and timing surface.
    fn forward_texts(&self, prompts: &[&str]) -> Result<(), ModelError> {
        let _ = prompts;
        Err(ModelError::ProbingUnsupported { matcher: self.id() })
    }
}

/// An architecture choice plus whether it expects pretrained weights;
/// produced by [`swap_base_model`], consumed by [`finetune_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherScaffold {
    pub preset: String,
    pub config: ModelConfig,
    pub pretrained: bool,
}

/// Look up a base-model preset by identifier. The decoder-only default is
/// the 124M-parameter configuration; the compact presets cover the same
/// three architecture families at from-scratch-trainable sizes.
pub fn swap_base_model(identifier: &str) -> Result<MatcherScaffold, ModelError> {
    let preset = |family, vocab_size, hidden, layers, heads, ffn, context| ModelConfig {
        family,
        vocab_size,
        hidden,
        layers,
        heads,
        ffn,
        context,
    };
    let (config, pretrained) = match identifier {
        "gpt2-124m" => (
            preset(ModelFamily::DecoderOnly, 50257, 768, 12, 12, 3072, 1024),
            true,
        ),
        "decoder-compact" => (
            preset(ModelFamily::DecoderOnly, 257, 96, 3, 4, 384, 512),
            false,
        ),
        "decoder-tiny" => (
            preset(ModelFamily::DecoderOnly, 257, 64, 2, 4, 256, 256),
            false,
        ),
        "encoder-compact" => (
            preset(ModelFamily::EncoderOnly, 257, 96, 3, 4, 384, 512),
            false,
        ),
        "encdec-compact" => (
            preset(ModelFamily::EncoderDecoder, 257, 96, 3, 4, 384, 512),
            false,
        ),
        other => {
            return Err(ModelError::UnknownPreset {
                name: other.to_string(),
                expected: BASE_MODEL_PRESETS.join(", "),
            })
        }
    };
    Ok(MatcherScaffold {
        preset: identifier.to_string(),
        config,
        pretrained,
    })
}

fn truncation_for(variant: &SerializationVariant) -> TruncationSide {
    // Keep whichever end carries the question.
    match variant.question_position {
        QuestionPosition::Suffix => TruncationSide::KeepTail,
        QuestionPosition::Prefix => TruncationSide::KeepHead,
    }
}

/// Environment variable naming a safetensors file with base weights for
/// pretrained presets.
pub const BASE_WEIGHTS_ENV: &str = "TM_BASE_WEIGHTS";

fn build_net(
    scaffold: &MatcherScaffold,
    seed: u64,
    device: &Device,
) -> Result<(Net, VarMap), ModelError> {
    let mut varmap = VarMap::new();
    let vb = VarBuilder::from_varmap(&varmap, DType::F32, device);
    let net = Net::new(&scaffold.config, &vb, device)?;
    if scaffold.pretrained {
        match std::env::var(BASE_WEIGHTS_ENV) {
            Ok(path) if !path.is_empty() => varmap.load(&path)?,
            _ => {
                return Err(ModelError::PretrainedWeightsRequired {
                    preset: scaffold.preset.clone(),
                })
            }
        }
    } else {
        seeded_init(&varmap, seed, device)?;
    }
    Ok((net, varmap))
}

/// The fine-tuned matcher: network, tokenizer, serialization variant, and
/// training provenance.
pub struct MatcherModel {
    net: Net,
    varmap: VarMap,
    tokenizer: ByteTokenizer,
    pub preset: String,
    pub variant: SerializationVariant,
    /// Prompt token budget; prompts are value-leveled down to fit it.
    pub max_sequence_length: usize,
    /// Batch size used when predicting through the [`Matcher`] trait.
    pub default_batch: usize,
    /// Column names for variants that serialize attribute names.
    pub attribute_names: Option<Vec<String>>,
    training_sources: Vec<String>,
    pub excluded_target: Option<String>,
    pub corpus_sha256: Option<String>,
    pub train_config: Option<TrainConfig>,
    pub report: Option<TrainReport>,
}

impl fmt::Debug for MatcherModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatcherModel")
            .field("preset", &self.preset)
            .field("params", &self.param_count())
            .field("variant", &self.variant.to_string())
            .field("excluded_target", &self.excluded_target)
            .finish_non_exhaustive()
    }
}

/// Fine-tune the default base model on `corpus`.
pub fn finetune(corpus: &FineTuneCorpus, cfg: &TrainConfig) -> Result<MatcherModel, ModelError> {
    finetune_with(corpus, &swap_base_model(DEFAULT_BASE_MODEL)?, cfg)
}

/// Fine-tune `scaffold` on `corpus`: stratified validation split, epochs
/// with early stopping on validation F1, best-epoch weights kept. A corpus
/// built in sequential attribute mode trains in two phases — attribute
/// samples to convergence, then record samples.
pub fn finetune_with(
    corpus: &FineTuneCorpus,
    scaffold: &MatcherScaffold,
    cfg: &TrainConfig,
) -> Result<MatcherModel, ModelError> {
    if corpus.samples.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    cfg.validate(&scaffold.config)?;
    let device = Device::Cpu;
    let (net, varmap) = build_net(scaffold, cfg.seed, &device)?;
    let tokenizer = ByteTokenizer::for_vocab(scaffold.config.vocab_size);
    let side = truncation_for(&corpus.variant);
    let seq_len = cfg.max_sequence_length;
    let batch = match cfg.batch_size {
        BatchSize::Fixed(n) => n,
        BatchSize::Auto => auto_batch_size(&net, seq_len),
    };

    let (train_samples, val_samples) =
        split_validation_seeded(corpus, cfg.validation_fraction, cfg.seed)?;

    let start = Instant::now();
    let mut phases = Vec::new();
    let sequential = corpus.config.attribute_mode == AttributeMode::Sequential
        && corpus.samples.iter().any(|s| s.phase == PHASE_ATTRIBUTE);
    if sequential {
        for (name, phase) in [("attribute", PHASE_ATTRIBUTE), ("record", PHASE_RECORD)] {
            let tr: Vec<&CorpusSample> =
                train_samples.iter().filter(|s| s.phase == phase).collect();
            let va: Vec<&CorpusSample> = val_samples.iter().filter(|s| s.phase == phase).collect();
            phases.push(train::run_phase(
                &net, &varmap, &tokenizer, side, name, &tr, &va, cfg, batch, seq_len,
            )?);
        }
    } else {
        let tr: Vec<&CorpusSample> = train_samples.iter().collect();
        let va: Vec<&CorpusSample> = val_samples.iter().collect();
        phases.push(train::run_phase(
            &net, &varmap, &tokenizer, side, "all", &tr, &va, cfg, batch, seq_len,
        )?);
    }

    let report = TrainReport {
        total_epochs: phases.iter().map(|p| p.epochs_run).sum(),
        train_samples: train_samples.len(),
        val_samples: val_samples.len(),
        wall_seconds: start.elapsed().as_secs_f64(),
        phases,
    };
    Ok(MatcherModel {
        net,
        varmap,
        tokenizer,
        preset: scaffold.preset.clone(),
        variant: corpus.variant,
        max_sequence_length: seq_len,
        default_batch: batch,
        attribute_names: None,
        training_sources: corpus.transfer_datasets.clone(),
        excluded_target: Some(corpus.excluded_target.clone()),
        corpus_sha256: Some(corpus_hash(corpus)),
        train_config: Some(cfg.clone()),
        report: Some(report),
    })
}

/// Probe doubling batch sizes with a full-length synthetic prompt and keep
/// the largest power of two that runs.
fn auto_batch_size(net: &Net, seq_len: usize) -> usize {
    let mut best = 1;
    let mut b = 1;
    while b <= AUTO_BATCH_CEILING {
        let ids = vec![65u32; b * seq_len];
        let lens = vec![seq_len; b];
        let ok = candle_core::Tensor::from_vec(ids, (b, seq_len), &net.device)
            .map_err(ModelError::from)
            .and_then(|t| net.forward(&t, &lens))
            .is_ok();
        if !ok {
            break;
        }
        best = b;
        b *= 2;
    }
    best
}

fn truncate_at_boundary(s: &str, limit: usize) -> &str {
    if s.len() <= limit {
        return s;
    }
    let mut k = limit;
    while k > 0 && !s.is_char_boundary(k) {
        k -= 1;
    }
    &s[..k]
}

fn clamp_record(record: &Record, cap: usize) -> Record {
    Record {
        values: record
            .values
            .iter()
            .map(|v| v.as_ref().map(|s| truncate_at_boundary(s, cap).to_string()))
            .collect(),
    }
}

impl MatcherModel {
    /// Freshly initialized (untrained) model from a scaffold, using the
    /// given serialization variant.
    pub fn from_scaffold(
        scaffold: &MatcherScaffold,
        variant: SerializationVariant,
        seed: u64,
    ) -> Result<MatcherModel, ModelError> {
        let device = Device::Cpu;
        let (net, varmap) = build_net(scaffold, seed, &device)?;
        Ok(MatcherModel {
            net,
            varmap,
            tokenizer: ByteTokenizer::for_vocab(scaffold.config.vocab_size),
            preset: scaffold.preset.clone(),
            variant,
            max_sequence_length: scaffold.config.context.min(512),
            default_batch: 16,
            attribute_names: None,
            training_sources: Vec::new(),
            excluded_target: None,
            corpus_sha256: None,
            train_config: None,
            report: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn param_count(&self) -> usize {
        varmap_param_count(&self.varmap)
    }

    pub fn tokenizer(&self) -> &ByteTokenizer {
        &self.tokenizer
    }

    /// Serialize one pair, shrinking the longest attribute values until the
    /// prompt fits the token budget; the question text always survives.
    fn render_leveled(
        &self,
        left: &Record,
        right: &Record,
        names: Option<&[String]>,
        pair_index: usize,
    ) -> Result<String, ModelError> {
        let render = |l: &Record, r: &Record| -> Result<String, SerializeError> {
            match names {
                Some(n) => serialize_record_pair_named(&l.values, &r.values, n, &self.variant),
                None => serialize_record_pair(&l.values, &r.values, &self.variant),
            }
        };
        let limit = self.max_sequence_length;
        let full = render(left, right)?;
        if self.tokenizer.count(&full) <= limit {
            return Ok(full);
        }
        let rendered_at = |cap: usize| -> Result<(String, bool), ModelError> {
            let text = render(&clamp_record(left, cap), &clamp_record(right, cap))?;
            let fits = self.tokenizer.count(&text) <= limit;
            Ok((text, fits))
        };
        let (floor_text, floor_fits) = rendered_at(0)?;
        if !floor_fits {
            return Err(ModelError::SequenceTooLong {
                pair_index,
                tokens: self.tokenizer.count(&floor_text),
                limit,
            });
        }
        // Largest per-value byte cap that still fits: prompt length is
        // monotone in the cap, so binary search applies; only values longer
        // than the cap get cut, i.e. longest values shrink first.
        let mut lo = 0usize;
        let mut hi = left
            .values
            .iter()
            .chain(&right.values)
            .filter_map(|v| v.as_ref().map(|s| s.len()))
            .max()
            .unwrap_or(0);
        let mut best = floor_text;
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            let (text, fits) = rendered_at(mid)?;
            if fits {
                lo = mid;
                best = text;
            } else {
                hi = mid - 1;
            }
        }
        Ok(best)
    }

    fn forward_scores(&self, texts: &[&str]) -> Result<Vec<f64>, ModelError> {
        let side = truncation_for(&self.variant);
        let (ids, lens) = train::encode_batch(
            &self.tokenizer,
            side,
            texts,
            self.max_sequence_length,
            &self.net.device,
        )?;
        let logits = self.net.forward(&ids, &lens)?;
        let flat: Vec<f32> = logits.flatten_all()?.to_vec1()?;
        Ok((0..texts.len())
            .map(|i| {
                let (l0, l1) = (f64::from(flat[2 * i]), f64::from(flat[2 * i + 1]));
                1.0 / (1.0 + (l0 - l1).exp())
            })
            .collect())
    }

    /// Batched prediction with explicit column names (required by variants
    /// that serialize attribute names) and batch size.
    pub fn predict_with_names(
        &self,
        pairs: &[(Record, Record)],
        names: Option<&[String]>,
        batch_size: BatchSize,
    ) -> Result<Vec<MatchPrediction>, ModelError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut prompts = Vec::with_capacity(pairs.len());
        for (i, (left, right)) in pairs.iter().enumerate() {
            prompts.push(self.render_leveled(left, right, names, i)?);
        }
        let batch = match batch_size {
            BatchSize::Fixed(n) => n.max(1),
            BatchSize::Auto => auto_batch_size(&self.net, self.max_sequence_length),
        };
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in prompts.chunks(batch) {
            let texts: Vec<&str> = chunk.iter().map(String::as_str).collect();
            out.extend(
                self.forward_scores(&texts)?
                    .into_iter()
                    .map(MatchPrediction::from_score),
            );
        }
        Ok(out)
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir)?;
        self.varmap.save(dir.join("weights.safetensors"))?;
        let tok = TokenizerSpec {
            scheme: "byte".to_string(),
            vocab_size: self.tokenizer.vocab_size,
            pad_id: self.tokenizer.pad_id,
            truncation_side: truncation_for(&self.variant),
        };
        write_json(&dir.join("tokenizer.json"), &tok)?;
        let cfg = CheckpointConfig {
            preset: self.preset.clone(),
            model: self.net.config.clone(),
            variant: self.variant.to_string(),
            max_sequence_length: self.max_sequence_length,
            default_batch: self.default_batch,
            attribute_names: self.attribute_names.clone(),
        };
        write_json(&dir.join("config.json"), &cfg)?;
        let prov = Provenance {
            matcher_id: Matcher::id(self),
            param_count: self.param_count(),
            corpus_sha256: self.corpus_sha256.clone(),
            train_config: self.train_config.clone(),
            training_sources: self.training_sources.clone(),
            excluded_target: self.excluded_target.clone(),
            report: self.report.clone(),
        };
        write_json(&dir.join("provenance.json"), &prov)
    }

    pub fn load_checkpoint(dir: &Path) -> Result<MatcherModel, ModelError> {
        let invalid = |path: &Path, reason: String| ModelError::CheckpointInvalid {
            path: path.display().to_string(),
            reason,
        };
        let cfg: CheckpointConfig = read_json(&dir.join("config.json"))?;
        let tok: TokenizerSpec = read_json(&dir.join("tokenizer.json"))?;
        if tok.scheme != "byte" {
            return Err(invalid(
                &dir.join("tokenizer.json"),
                format!("unsupported tokenizer scheme `{}`", tok.scheme),
            ));
        }
        if tok.vocab_size != cfg.model.vocab_size {
            return Err(invalid(
                &dir.join("tokenizer.json"),
                format!(
                    "tokenizer vocab {} does not match model vocab {}",
                    tok.vocab_size, cfg.model.vocab_size
                ),
            ));
        }
        let prov: Provenance = read_json(&dir.join("provenance.json"))?;
        let variant = SerializationVariant::from_str(&cfg.variant)
            .map_err(|e| invalid(&dir.join("config.json"), e.to_string()))?;

        let device = Device::Cpu;
        let mut varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
        let net = Net::new(&cfg.model, &vb, &device)?;
        let weights = dir.join("weights.safetensors");
        if !weights.is_file() {
            return Err(invalid(&weights, "file missing".to_string()));
        }
        varmap
            .load(&weights)
            .map_err(|e| invalid(&weights, e.to_string()))?;

        let tokenizer = ByteTokenizer {
            vocab_size: tok.vocab_size,
            pad_id: tok.pad_id,
        };
        Ok(MatcherModel {
            net,
            varmap,
            tokenizer,
            preset: cfg.preset,
            variant,
            max_sequence_length: cfg.max_sequence_length,
            default_batch: cfg.default_batch,
            attribute_names: cfg.attribute_names,
            training_sources: prov.training_sources,
            excluded_target: prov.excluded_target,
            corpus_sha256: prov.corpus_sha256,
            train_config: prov.train_config,
            report: prov.report,
        })
    }
}

impl Matcher for MatcherModel {
    fn id(&self) -> String {
        match &self.excluded_target {
            Some(target) => format!("tinymatch-{}-minus-{target}", self.preset),
            None => format!("tinymatch-{}", self.preset),
        }
    }

    fn predict(&self, pairs: &[(Record, Record)]) -> Result<Vec<MatchPrediction>, ModelError> {
        self.predict_with_names(
            pairs,
            self.attribute_names.as_deref(),
            BatchSize::Fixed(self.default_batch),
        )
    }

    fn training_sources(&self) -> Option<&[String]> {
        Some(&self.training_sources)
    }

    fn count_tokens(&self, text: &str) -> usize {
        self.tokenizer.count(text).min(self.max_sequence_length)
    }

    fn forward_texts(&self, prompts: &[&str]) -> Result<(), ModelError> {
        self.forward_scores(prompts).map(|_| ())
    }
}

/// One prediction per pair, order-preserving. Column names stored on the
/// model (if any) are used for name-carrying serialization variants.
pub fn predict_pairs(
    m: &MatcherModel,
    pairs: &[(Record, Record)],
    batch_size: BatchSize,
) -> Result<Vec<MatchPrediction>, ModelError> {
    m.predict_with_names(pairs, m.attribute_names.as_deref(), batch_size)
}

#[derive(Serialize, Deserialize)]
struct TokenizerSpec {
    scheme: String,
    vocab_size: usize,
    pad_id: u32,
    truncation_side: TruncationSide,
}

#[derive(Serialize, Deserialize)]
struct CheckpointConfig {
    preset: String,
    model: ModelConfig,
    variant: String,
    max_sequence_length: usize,
    default_batch: usize,
    attribute_names: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct Provenance {
    matcher_id: String,
    param_count: usize,
    corpus_sha256: Option<String>,
    train_config: Option<TrainConfig>,
    training_sources: Vec<String>,
    excluded_target: Option<String>,
    report: Option<TrainReport>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ModelError> {
    let text = serde_json::to_string_pretty(value)?;
    Ok(std::fs::write(path, text)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::CheckpointInvalid {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| ModelError::CheckpointInvalid {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
