//! Compact transformer classifier over byte tokens.
//!
//! Three wirings share one block implementation:
//! - decoder-only: causal self-attention, head reads the last non-padding
//!   token's representation;
//! - encoder-only: bidirectional self-attention, head reads the mean over
//!   non-padding positions;
//! - encoder-decoder: bidirectional encoder, a single learned query
//!   cross-attends over the encoding, head reads that query's output.
//!
//! Padding is always on the right and masked out of attention keys, so
//! adding padding never changes a sequence's logits.
//!
//! All parameters are created zero-filled; callers either run
//! [`seeded_init`] (deterministic, rng-backed) or load stored weights.

use candle_core::{Device, Tensor, D};
use candle_nn::ops::softmax;
use candle_nn::{Embedding, LayerNorm, Linear, Module, VarBuilder, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    DecoderOnly,
    EncoderOnly,
    EncoderDecoder,
}

/// How the classification head obtains its single pooled vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadWiring {
    LastNonPad,
    MeanPool,
    CrossAttend,
}

impl ModelFamily {
    pub fn head_wiring(self) -> HeadWiring {
        match self {
            ModelFamily::DecoderOnly => HeadWiring::LastNonPad,
            ModelFamily::EncoderOnly => HeadWiring::MeanPool,
            ModelFamily::EncoderDecoder => HeadWiring::CrossAttend,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: ModelFamily,
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    /// Maximum sequence length (learned position embeddings).
    pub context: usize,
}

impl ModelConfig {
    /// Exact trainable parameter count for this configuration, head included.
    pub fn param_count(&self) -> usize {
        let h = self.hidden;
        let block = 2 * (2 * h) // two layer norms
            + (h * 3 * h + 3 * h) // qkv
            + (h * h + h) // attention projection
            + (h * self.ffn + self.ffn) // mlp in
            + (self.ffn * h + h); // mlp out
        let mut total = self.vocab_size * h // token embeddings
            + self.context * h // position embeddings
            + self.layers * block
            + 2 * h // final layer norm
            + 2 * h; // head (2 classes, no bias)
        if self.family == ModelFamily::EncoderDecoder {
            total += h // learned query
                + 4 * (h * h + h) // q, k, v, out projections
                + 2 * h; // cross layer norm
        }
        total
    }
}

fn lin(vb: &VarBuilder, inp: usize, out: usize, name: &str) -> Result<Linear, candle_core::Error> {
    let vb = vb.pp(name);
    let w = vb.get_with_hints((out, inp), "weight", candle_nn::Init::Const(0.0))?;
    let b = vb.get_with_hints(out, "bias", candle_nn::Init::Const(0.0))?;
    Ok(Linear::new(w, Some(b)))
}

fn norm(vb: &VarBuilder, size: usize, name: &str) -> Result<LayerNorm, candle_core::Error> {
    let vb = vb.pp(name);
    let w = vb.get_with_hints(size, "weight", candle_nn::Init::Const(0.0))?;
    let b = vb.get_with_hints(size, "bias", candle_nn::Init::Const(0.0))?;
    Ok(LayerNorm::new(w, b, 1e-5))
}

struct SelfAttn {
    qkv: Linear,
    proj: Linear,
    heads: usize,
}

impl SelfAttn {
    fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor, candle_core::Error> {
        let (b, t, h) = x.dims3()?;
        let hd = h / self.heads;
        let qkv = self.qkv.forward(x)?;
        let q = qkv.narrow(D::Minus1, 0, h)?;
        let k = qkv.narrow(D::Minus1, h, h)?;
        let v = qkv.narrow(D::Minus1, 2 * h, h)?;
        let split = |t_: &Tensor| -> Result<Tensor, candle_core::Error> {
            t_.reshape((b, t, self.heads, hd))?.transpose(1, 2)?.contiguous()
        };
        let (q, k, v) = (split(&q)?, split(&k)?, split(&v)?);
        let att = q
            .matmul(&k.transpose(2, 3)?.contiguous()?)?
            .affine(1.0 / (hd as f64).sqrt(), 0.0)?;
        let att = att.broadcast_add(mask)?;
        let probs = softmax(&att, D::Minus1)?;
        let ctx = probs
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, t, h))?;
        self.proj.forward(&ctx)
    }
}

struct Mlp {
    fc: Linear,
    proj: Linear,
}

impl Mlp {
    fn forward(&self, x: &Tensor) -> Result<Tensor, candle_core::Error> {
        self.proj.forward(&self.fc.forward(x)?.gelu()?)
    }
}

struct Block {
    ln1: LayerNorm,
    attn: SelfAttn,
    ln2: LayerNorm,
    mlp: Mlp,
}

impl Block {
    fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor, candle_core::Error> {
        let x = (x + self.attn.forward(&self.ln1.forward(x)?, mask)?)?;
        &x + self.mlp.forward(&self.ln2.forward(&x)?)?
    }
}

struct CrossHead {
    query: Tensor,
    q: Linear,
    k: Linear,
    v: Linear,
    proj: Linear,
    ln: LayerNorm,
    heads: usize,
}

impl CrossHead {
    fn forward(&self, hs: &Tensor, pad_mask: &Tensor) -> Result<Tensor, candle_core::Error> {
        let (b, t, h) = hs.dims3()?;
        let hd = h / self.heads;
        let q = self
            .q
            .forward(&self.query.broadcast_as((b, 1, h))?.contiguous()?)?
            .reshape((b, 1, self.heads, hd))?
            .transpose(1, 2)?
            .contiguous()?;
        let k = self
            .k
            .forward(hs)?
            .reshape((b, t, self.heads, hd))?
            .transpose(1, 2)?
            .contiguous()?;
        let v = self
            .v
            .forward(hs)?
            .reshape((b, t, self.heads, hd))?
            .transpose(1, 2)?
            .contiguous()?;
        let att = q
            .matmul(&k.transpose(2, 3)?.contiguous()?)?
            .affine(1.0 / (hd as f64).sqrt(), 0.0)?;
        let att = att.broadcast_add(pad_mask)?;
        let probs = softmax(&att, D::Minus1)?;
        let ctx = probs
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, 1, h))?;
        let pooled = self.proj.forward(&ctx)?.squeeze(1)?;
        self.ln.forward(&pooled)
    }
}

pub struct Net {
    pub config: ModelConfig,
    wte: Embedding,
    wpe: Embedding,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    cross: Option<CrossHead>,
    head: Linear,
    pub device: Device,
}

impl Net {
    pub fn new(config: &ModelConfig, vb: &VarBuilder, device: &Device) -> Result<Self, ModelError> {
        let h = config.hidden;
        let wte_w = vb.get_with_hints(
            (config.vocab_size, h),
            "wte.weight",
            candle_nn::Init::Const(0.0),
        )?;
        let wpe_w = vb.get_with_hints(
            (config.context, h),
            "wpe.weight",
            candle_nn::Init::Const(0.0),
        )?;
        let mut blocks = Vec::with_capacity(config.layers);
        for i in 0..config.layers {
            let bb = vb.pp(format!("h{i}"));
            blocks.push(Block {
                ln1: norm(&bb, h, "ln1")?,
                attn: SelfAttn {
                    qkv: lin(&bb.pp("attn"), h, 3 * h, "qkv")?,
                    proj: lin(&bb.pp("attn"), h, h, "proj")?,
                    heads: config.heads,
                },
                ln2: norm(&bb, h, "ln2")?,
                mlp: Mlp {
                    fc: lin(&bb.pp("mlp"), h, config.ffn, "fc")?,
                    proj: lin(&bb.pp("mlp"), config.ffn, h, "proj")?,
                },
            });
        }
        let ln_f = norm(vb, h, "ln_f")?;
        let cross = if config.family == ModelFamily::EncoderDecoder {
            let cb = vb.pp("cross");
            Some(CrossHead {
                query: cb.get_with_hints((1, 1, h), "query", candle_nn::Init::Const(0.0))?,
                q: lin(&cb, h, h, "q")?,
                k: lin(&cb, h, h, "k")?,
                v: lin(&cb, h, h, "v")?,
                proj: lin(&cb, h, h, "proj")?,
                ln: norm(&cb, h, "ln")?,
                heads: config.heads,
            })
        } else {
            None
        };
        let head_w = vb.get_with_hints((2, h), "head.weight", candle_nn::Init::Const(0.0))?;
        let head = Linear::new(head_w, None);
        Ok(Net {
            config: config.clone(),
            wte: Embedding::new(wte_w, h),
            wpe: Embedding::new(wpe_w, h),
            blocks,
            ln_f,
            cross,
            head,
            device: device.clone(),
        })
    }

    fn self_attention_mask(&self, lens: &[usize], t: usize) -> Result<Tensor, candle_core::Error> {
        let b = lens.len();
        let causal = self.config.family == ModelFamily::DecoderOnly;
        let mut data = vec![0f32; b * t * t];
        for (bi, &len) in lens.iter().enumerate() {
            for tq in 0..t {
                for tk in 0..t {
                    let blocked = tk >= len || (causal && tk > tq);
                    if blocked {
                        data[bi * t * t + tq * t + tk] = -1e9;
                    }
                }
            }
        }
        Tensor::from_vec(data, (b, 1, t, t), &self.device)
    }

    fn pad_mask(&self, lens: &[usize], t: usize) -> Result<Tensor, candle_core::Error> {
        let b = lens.len();
        let mut data = vec![0f32; b * t];
        for (bi, &len) in lens.iter().enumerate() {
            for tk in len..t {
                data[bi * t + tk] = -1e9;
            }
        }
        Tensor::from_vec(data, (b, 1, 1, t), &self.device)
    }

    /// Logits of shape `(batch, 2)` for right-padded token ids `(batch, t)`.
    /// `lens[i]` is the non-padding length of row `i` (at least 1).
    pub fn forward(&self, ids: &Tensor, lens: &[usize]) -> Result<Tensor, ModelError> {
        let (b, t) = ids.dims2()?;
        debug_assert_eq!(b, lens.len());
        if t > self.config.context {
            return Err(ModelError::ContextOverflow {
                tokens: t,
                context: self.config.context,
            });
        }
        let positions = Tensor::arange(0u32, t as u32, &self.device)?;
        let mut x = self
            .wte
            .forward(ids)?
            .broadcast_add(&self.wpe.forward(&positions)?)?;
        let mask = self.self_attention_mask(lens, t)?;
        for block in &self.blocks {
            x = block.forward(&x, &mask)?;
        }
        let hs = self.ln_f.forward(&x)?;

        let pooled = match self.config.family.head_wiring() {
            HeadWiring::LastNonPad => {
                let idx: Vec<u32> = lens.iter().map(|&l| (l - 1) as u32).collect();
                let idx = Tensor::from_vec(idx, (b, 1, 1), &self.device)?
                    .broadcast_as((b, 1, self.config.hidden))?
                    .contiguous()?;
                hs.gather(&idx, 1)?.squeeze(1)?
            }
            HeadWiring::MeanPool => {
                let mut maskf = vec![0f32; b * t];
                for (bi, &len) in lens.iter().enumerate() {
                    for tk in 0..len {
                        maskf[bi * t + tk] = 1.0;
                    }
                }
                let m = Tensor::from_vec(maskf, (b, t, 1), &self.device)?;
                let lensf: Vec<f32> = lens.iter().map(|&l| l as f32).collect();
                let lens_t = Tensor::from_vec(lensf, (b, 1), &self.device)?;
                hs.broadcast_mul(&m)?.sum(1)?.broadcast_div(&lens_t)?
            }
            HeadWiring::CrossAttend => {
                let pad = self.pad_mask(lens, t)?;
                self.cross
                    .as_ref()
                    .expect("encoder-decoder net has a cross head")
                    .forward(&hs, &pad)?
            }
        };
        Ok(self.head.forward(&pooled)?)
    }
}

fn fnv1a(seed: u64, name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.rotate_left(17);
    for byte in name.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn normal_sample(rng: &mut ChaCha8Rng, stdev: f32) -> f32 {
    // Box-Muller; avoids pulling a distributions crate for one use.
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    (z as f32) * stdev
}

/// Deterministically initialize every parameter in `varmap`: biases to zero,
/// layer-norm weights to one, everything else N(0, 0.02) from a per-name
/// seeded stream, so map iteration order cannot influence the result.
pub fn seeded_init(varmap: &VarMap, seed: u64, device: &Device) -> Result<(), ModelError> {
    let data = varmap.data().lock().unwrap();
    let mut names: Vec<String> = data.keys().cloned().collect();
    names.sort();
    for name in names {
        let var = &data[&name];
        let shape = var.shape().clone();
        let n = shape.elem_count();
        let parts: Vec<&str> = name.split('.').collect();
        let leaf = *parts.last().unwrap_or(&"");
        let parent = parts.len().checked_sub(2).map(|i| parts[i]).unwrap_or("");
        let values: Vec<f32> = if leaf == "bias" {
            vec![0.0; n]
        } else if leaf == "weight" && parent.starts_with("ln") {
            vec![1.0; n]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, &name));
            (0..n).map(|_| normal_sample(&mut rng, 0.02)).collect()
        };
        let t = Tensor::from_vec(values, shape, device)?;
        var.set(&t)?;
    }
    Ok(())
}

/// Total elements across all parameters currently in `varmap`.
pub fn varmap_param_count(varmap: &VarMap) -> usize {
    varmap
        .data()
        .lock()
        .unwrap()
        .values()
        .map(|v| v.shape().elem_count())
        .sum()
}
