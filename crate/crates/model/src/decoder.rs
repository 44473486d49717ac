//! Toy causal language model with LoRA-adapted attention.
//!
//! Pre-norm transformer; token embeddings are tied to the output head and
//! split into a frozen base table and a trainable table for the special
//! tokens. Positions use a fixed sinusoidal code.

use candle_core::{DType, Tensor};
use petct_core::config::{DecoderConfig, LoraConfig};
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, Result};
use crate::lora::{Dropout, LoraLinear};
use crate::nn::{attention, causal_mask, FeedForward, LayerNorm, Linear};
use crate::params::{Init, ParamStore};

pub const SPECIAL_EMBEDDINGS: &str = "special_token_embeddings";

#[derive(Clone, Debug)]
struct DecoderLayer {
    ln1: LayerNorm,
    query: LoraLinear,
    key: LoraLinear,
    value: LoraLinear,
    output: LoraLinear,
    ln2: LayerNorm,
    ff: FeedForward,
}

#[derive(Clone, Debug)]
pub struct ToyDecoder {
    width: usize,
    heads: usize,
    max_positions: usize,
    base_embed: Tensor,
    special_embed: Tensor,
    layers: Vec<DecoderLayer>,
    final_norm: LayerNorm,
    lora_dropout: f64,
}

/// Sinusoidal position code for positions `0..t`.
pub fn sinusoidal_positions(t: usize, width: usize, dtype: DType, device: &candle_core::Device) -> Result<Tensor> {
    let half = width / 2;
    let mut data = vec![0f32; t * width];
    for p in 0..t {
        for k in 0..half {
            let a = p as f64 / 10000f64.powf(k as f64 / half as f64);
            data[p * width + k] = a.sin() as f32;
            data[p * width + half + k] = a.cos() as f32;
        }
    }
    Ok(Tensor::from_vec(data, (t, width), device)?.to_dtype(dtype)?)
}

fn dropout<'a>(rng: &'a mut Option<&mut ChaCha8Rng>, p: f64) -> Option<Dropout<'a>> {
    rng.as_deref_mut().map(|rng| Dropout { p, rng })
}

impl ToyDecoder {
    /// Base weights are frozen unless `train_base` is set (base pretraining).
    /// LoRA adapters are attached to the targets in `lora`; pass `None` for
    /// the unadapted base model.
    pub fn new(
        store: &mut ParamStore,
        width: usize,
        base_vocab: usize,
        special_vocab: usize,
        cfg: &DecoderConfig,
        lora: Option<&LoraConfig>,
        train_base: bool,
    ) -> Result<Self> {
        cfg.validate(width)?;
        if let Some(l) = lora {
            l.validate()?;
        }
        let base_embed = store.add("decoder.embed", &[base_vocab, width], Init::Normal(1.0), train_base)?;
        let special_embed = store.add(SPECIAL_EMBEDDINGS, &[special_vocab, width], Init::Normal(1.0), true)?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for i in 0..cfg.layers {
            let n = format!("decoder.layers.{i}");
            let proj = |store: &mut ParamStore, target: &str| -> Result<LoraLinear> {
                let base = Linear::new(store, &format!("{n}.{target}"), width, width, true, train_base)?;
                match lora {
                    Some(l) if l.target_matrices.iter().any(|t| t == target) => LoraLinear::attach(
                        store,
                        &format!("lora.layers.{i}.{target}"),
                        base,
                        l.rank,
                        l.scale(),
                    ),
                    _ => Ok(LoraLinear::plain(base)),
                }
            };
            let query = proj(store, "query")?;
            let key = proj(store, "key")?;
            let value = proj(store, "value")?;
            let output = proj(store, "output")?;
            layers.push(DecoderLayer {
                ln1: LayerNorm::new(store, &format!("{n}.ln1"), width, train_base)?,
                query,
                key,
                value,
                output,
                ln2: LayerNorm::new(store, &format!("{n}.ln2"), width, train_base)?,
                ff: FeedForward::new(store, &format!("{n}.ff"), width, width * cfg.ff_ratio, train_base)?,
            });
        }
        let final_norm = LayerNorm::new(store, "decoder.final_norm", width, train_base)?;
        Ok(ToyDecoder {
            width,
            heads: cfg.heads,
            max_positions: cfg.max_positions,
            base_embed,
            special_embed,
            layers,
            final_norm,
            lora_dropout: lora.map_or(0.0, |l| l.dropout),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vocab_size(&self) -> usize {
        self.base_embed.dims()[0] + self.special_embed.dims()[0]
    }

    pub fn max_positions(&self) -> usize {
        self.max_positions
    }

    fn table(&self) -> Result<Tensor> {
        Ok(Tensor::cat(&[&self.base_embed, &self.special_embed], 0)?)
    }

    pub fn embed(&self, ids: &[u32]) -> Result<Tensor> {
        let v = self.vocab_size() as u32;
        if let Some(bad) = ids.iter().find(|&&i| i >= v) {
            return Err(ModelError::InvalidInput(format!("token id {bad} outside vocabulary of {v}")));
        }
        let idx = Tensor::new(ids, self.base_embed.device())?;
        Ok(self.table()?.index_select(&idx, 0)?)
    }

    /// Hidden states for a `(t, width)` input embedding sequence. A generator
    /// enables LoRA dropout (training mode).
    pub fn hidden(&self, embeds: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let (t, w) = embeds.dims2()?;
        if w != self.width {
            return Err(ModelError::Shape(format!("decoder width {}, input width {w}", self.width)));
        }
        if t > self.max_positions {
            return Err(ModelError::InvalidInput(format!(
                "sequence of {t} positions exceeds decoder limit {}",
                self.max_positions
            )));
        }
        let pos = sinusoidal_positions(t, w, embeds.dtype(), embeds.device())?;
        let mask = causal_mask(t, embeds)?;
        let mut x = (embeds + pos)?;
        let p = self.lora_dropout;
        for l in &self.layers {
            let h = l.ln1.forward(&x)?;
            let q = l.query.forward(&h, dropout(&mut rng, p).as_mut())?;
            let k = l.key.forward(&h, dropout(&mut rng, p).as_mut())?;
            let v = l.value.forward(&h, dropout(&mut rng, p).as_mut())?;
            let a = attention(&q, &k, &v, self.heads, Some(&mask))?;
            let o = l.output.forward(&a, dropout(&mut rng, p).as_mut())?;
            x = (x + o)?;
            let f = l.ff.forward(&l.ln2.forward(&x)?)?;
            x = (x + f)?;
        }
        self.final_norm.forward(&x)
    }

    /// Tied output head: `h · Eᵀ / √width`.
    pub fn logits(&self, hidden: &Tensor) -> Result<Tensor> {
        let scale = 1.0 / (self.width as f64).sqrt();
        Ok((hidden.matmul(&self.table()?.t()?)? * scale)?)
    }
}
