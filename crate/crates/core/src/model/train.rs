//! Fine-tuning loop: AdamW, per-epoch shuffling, early stopping on
//! validation F1, and best-epoch weight restoration.

use candle_core::{Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW, VarMap};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusSample;
use crate::data::MatchLabel;

use super::net::{ModelConfig, Net};
use super::tokenizer::{ByteTokenizer, TruncationSide};
use super::{BatchSize, ModelError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without validation-F1 improvement tolerated before stopping.
    pub patience: usize,
    /// Minimum F1 gain over the best epoch that counts as improvement.
    pub improvement_epsilon: f64,
    pub batch_size: BatchSize,
    /// Prompts longer than this many tokens are truncated before training.
    pub max_sequence_length: usize,
    /// Fraction of the corpus held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            weight_decay: 0.01,
            max_epochs: 50,
            patience: 6,
            improvement_epsilon: 1e-4,
            batch_size: BatchSize::Fixed(16),
            max_sequence_length: 512,
            validation_fraction: 0.1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// Check the config against itself and the model it will train.
    pub fn validate(&self, model: &ModelConfig) -> Result<(), ModelError> {
        let bad = |reason: &str| {
            Err(ModelError::BadTrainConfig {
                reason: reason.to_string(),
            })
        };
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.patience >= self.max_epochs {
            return bad("patience must be smaller than max_epochs");
        }
        if self.improvement_epsilon < 0.0 || self.improvement_epsilon.is_nan() {
            return bad("improvement_epsilon must be non-negative");
        }
        if self.batch_size == BatchSize::Fixed(0) {
            return bad("batch_size must be positive");
        }
        if self.max_sequence_length == 0 {
            return bad("max_sequence_length must be at least 1");
        }
        if self.max_sequence_length > model.context {
            return Err(ModelError::BadTrainConfig {
                reason: format!(
                    "max_sequence_length {} exceeds the model context {}",
                    self.max_sequence_length, model.context
                ),
            });
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must be strictly between 0 and 1");
        }
        Ok(())
    }
}

/// Per-epoch training history for one phase.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LossCurve {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_f1: Vec<f64>,
}

/// Outcome of one training phase (a full early-stopped run over one
/// sample pool; sequential curricula run two phases back to back).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainPhase {
    pub name: String,
    pub train_samples: usize,
    pub val_samples: usize,
    pub epochs_run: usize,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub curve: LossCurve,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub phases: Vec<TrainPhase>,
    pub total_epochs: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub wall_seconds: f64,
}

/// Right-pad encoded prompts into an id tensor plus per-row true lengths.
pub(crate) fn encode_batch(
    tokenizer: &ByteTokenizer,
    side: TruncationSide,
    texts: &[&str],
    context: usize,
    device: &Device,
) -> Result<(Tensor, Vec<usize>), ModelError> {
    let mut rows: Vec<Vec<u32>> = Vec::with_capacity(texts.len());
    for text in texts {
        let mut ids = tokenizer.encode_truncated(text, context, side);
        if ids.is_empty() {
            ids.push(tokenizer.pad_id);
        }
        rows.push(ids);
    }
    let max_len = rows.iter().map(Vec::len).max().unwrap_or(1);
    let lens: Vec<usize> = rows.iter().map(Vec::len).collect();
    let mut flat = Vec::with_capacity(rows.len() * max_len);
    for mut row in rows {
        row.resize(max_len, tokenizer.pad_id);
        flat.extend(row);
    }
    let ids = Tensor::from_vec(flat, (texts.len(), max_len), device)?;
    Ok((ids, lens))
}

fn binary_f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

fn snapshot(varmap: &VarMap) -> Result<Vec<(String, Tensor)>, ModelError> {
    let data = varmap.data().lock().unwrap();
    let mut names: Vec<String> = data.keys().cloned().collect();
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        out.push((name.clone(), data[&name].as_tensor().copy()?));
    }
    Ok(out)
}

fn restore(varmap: &VarMap, snap: &[(String, Tensor)]) -> Result<(), ModelError> {
    let data = varmap.data().lock().unwrap();
    for (name, tensor) in snap {
        data[name].set(tensor)?;
    }
    Ok(())
}

fn eval_pass(
    net: &Net,
    tokenizer: &ByteTokenizer,
    side: TruncationSide,
    samples: &[&CorpusSample],
    batch_size: usize,
    seq_len: usize,
) -> Result<(f64, f64), ModelError> {
    if samples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut loss_sum = 0.0;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for chunk in samples.chunks(batch_size) {
        let texts: Vec<&str> = chunk.iter().map(|s| s.text.as_str()).collect();
        let (ids, lens) = encode_batch(tokenizer, side, &texts, seq_len, &net.device)?;
        let logits = net.forward(&ids, &lens)?;
        let targets: Vec<u32> = chunk.iter().map(|s| u32::from(s.label.as_u8())).collect();
        let target_t = Tensor::from_vec(targets, chunk.len(), &net.device)?;
        let loss = candle_nn::loss::cross_entropy(&logits, &target_t)?;
        loss_sum += f64::from(loss.to_scalar::<f32>()?) * chunk.len() as f64;
        let flat: Vec<f32> = logits.flatten_all()?.to_vec1()?;
        for (i, sample) in chunk.iter().enumerate() {
            let predicted_match = flat[2 * i + 1] >= flat[2 * i];
            match (predicted_match, sample.label == MatchLabel::Match) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok((loss_sum / samples.len() as f64, binary_f1(tp, fp, fn_)))
}

/// Train `net` on one pool with early stopping; leaves the best epoch's
/// weights in place. The optimizer starts fresh (phase boundaries reset
/// AdamW moments, not weights).
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_phase(
    net: &Net,
    varmap: &VarMap,
    tokenizer: &ByteTokenizer,
    side: TruncationSide,
    name: &str,
    train: &[&CorpusSample],
    val: &[&CorpusSample],
    cfg: &TrainConfig,
    batch_size: usize,
    seq_len: usize,
) -> Result<TrainPhase, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet {
            phase: name.to_string(),
        });
    }
    let params = ParamsAdamW {
        lr: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };
    let mut optimizer = AdamW::new(varmap.all_vars(), params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x2545_f491_4f6c_dd1d));

    let mut curve = LossCurve::default();
    let mut best_f1 = 0.0f64;
    let mut best_epoch = 0usize;
    let mut best_weights: Option<Vec<(String, Tensor)>> = None;
    let mut stale = 0usize;
    let mut epochs_run = 0usize;

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch_size) {
            let texts: Vec<&str> = chunk.iter().map(|&i| train[i].text.as_str()).collect();
            let (ids, lens) = encode_batch(tokenizer, side, &texts, seq_len, &net.device)?;
            let logits = net.forward(&ids, &lens)?;
            let targets: Vec<u32> = chunk
                .iter()
                .map(|&i| u32::from(train[i].label.as_u8()))
                .collect();
            let target_t = Tensor::from_vec(targets, chunk.len(), &net.device)?;
            let loss = candle_nn::loss::cross_entropy(&logits, &target_t)?;
            loss_sum += f64::from(loss.to_scalar::<f32>()?) * chunk.len() as f64;
            optimizer.backward_step(&loss)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let (val_loss, val_f1) = eval_pass(net, tokenizer, side, val, batch_size, seq_len)?;
        curve.train_loss.push(train_loss);
        curve.val_loss.push(val_loss);
        curve.val_f1.push(val_f1);
        log::debug!(
            "phase {name} epoch {epoch}: train_loss {train_loss:.4} val_loss {val_loss:.4} val_f1 {val_f1:.4}"
        );

        let improved = best_epoch == 0 || val_f1 > best_f1 + cfg.improvement_epsilon;
        if improved {
            best_f1 = val_f1;
            best_epoch = epoch;
            stale = 0;
            best_weights = Some(snapshot(varmap)?);
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    if let Some(weights) = &best_weights {
        restore(varmap, weights)?;
    }
    Ok(TrainPhase {
        name: name.to_string(),
        train_samples: train.len(),
        val_samples: val.len(),
        epochs_run,
        best_epoch,
        best_val_f1: best_f1,
        curve,
    })
}
