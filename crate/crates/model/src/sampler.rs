//! Perceiver sampler and per-modality projection.
//!
//! A fixed set of learned latent queries cross-attends over the encoder
//! features concatenated with the latents themselves, so the output length
//! never depends on the input length.

use candle_core::Tensor;
use petct_core::config::EncoderConfig;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::nn::{attention, FeedForward, LayerNorm, Linear};
use crate::params::{Init, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualModality {
    Ct,
    Pet,
}

impl VisualModality {
    pub const ALL: [VisualModality; 2] = [VisualModality::Ct, VisualModality::Pet];

    pub fn name(self) -> &'static str {
        match self {
            VisualModality::Ct => "ct",
            VisualModality::Pet => "pet",
        }
    }
}

/// Fixed-length visual tokens for one modality.
#[derive(Clone, Debug)]
pub struct VisualTokenBlock {
    pub modality: VisualModality,
    pub tokens: Tensor,
}

impl VisualTokenBlock {
    pub fn len(&self) -> usize {
        self.tokens.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.dims()[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerDims {
    pub width: usize,
    pub latents: usize,
    pub depth: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ff_ratio: usize,
}

impl SamplerDims {
    pub fn from_config(cfg: &EncoderConfig) -> Self {
        SamplerDims {
            width: cfg.token_width,
            latents: cfg.latent_queries,
            depth: cfg.perceiver_depth,
            heads: cfg.perceiver_heads,
            head_dim: cfg.perceiver_head_dim,
            ff_ratio: cfg.perceiver_ff_ratio,
        }
    }
}

#[derive(Clone, Debug)]
struct PerceiverLayer {
    ln_media: LayerNorm,
    ln_latents: LayerNorm,
    q: Linear,
    kv: Linear,
    out: Linear,
    ln_ff: LayerNorm,
    ff: FeedForward,
}

#[derive(Clone, Debug)]
pub struct PerceiverSampler {
    pub latents: Tensor,
    layers: Vec<PerceiverLayer>,
    norm: LayerNorm,
    dims: SamplerDims,
}

impl PerceiverSampler {
    pub fn new(store: &mut ParamStore, prefix: &str, dims: SamplerDims) -> Result<Self> {
        let w = dims.width;
        let inner = dims.heads * dims.head_dim;
        let latents = store.add(&format!("{prefix}.latents"), &[dims.latents, w], Init::Normal(1.0), true)?;
        let layers = (0..dims.depth)
            .map(|i| {
                let n = format!("{prefix}.layers.{i}");
                Ok(PerceiverLayer {
                    ln_media: LayerNorm::new(store, &format!("{n}.ln_media"), w, true)?,
                    ln_latents: LayerNorm::new(store, &format!("{n}.ln_latents"), w, true)?,
                    q: Linear::new(store, &format!("{n}.q"), w, inner, false, true)?,
                    kv: Linear::new(store, &format!("{n}.kv"), w, 2 * inner, false, true)?,
                    out: Linear::new(store, &format!("{n}.out"), inner, w, false, true)?,
                    ln_ff: LayerNorm::new(store, &format!("{n}.ln_ff"), w, true)?,
                    ff: FeedForward::new(store, &format!("{n}.ff"), w, w * dims.ff_ratio, true)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let norm = LayerNorm::new(store, &format!("{prefix}.norm"), w, true)?;
        Ok(PerceiverSampler { latents, layers, norm, dims })
    }

    pub fn dims(&self) -> SamplerDims {
        self.dims
    }

    /// `(n, width)` features → `(latents, width)` tokens.
    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        let (n, w) = features.dims2()?;
        if n == 0 {
            return Err(ModelError::InvalidInput("sampler input has no features".into()));
        }
        if w != self.dims.width {
            return Err(ModelError::Shape(format!("sampler expects width {}, got {w}", self.dims.width)));
        }
        let inner = self.dims.heads * self.dims.head_dim;
        let mut lat = self.latents.clone();
        for l in &self.layers {
            let media = l.ln_media.forward(features)?;
            let ln_lat = l.ln_latents.forward(&lat)?;
            let q = l.q.forward(&ln_lat)?;
            let kv = l.kv.forward(&Tensor::cat(&[&media, &ln_lat], 0)?)?;
            let k = kv.narrow(1, 0, inner)?;
            let v = kv.narrow(1, inner, inner)?;
            let a = l.out.forward(&attention(&q, &k, &v, self.dims.heads, None)?)?;
            lat = (lat + a)?;
            let f = l.ff.forward(&l.ln_ff.forward(&lat)?)?;
            lat = (lat + f)?;
        }
        self.norm.forward(&lat)
    }
}

/// Token-wise affine map into the decoder embedding space.
#[derive(Clone, Debug)]
pub struct Projection {
    pub linear: Linear,
}

impl Projection {
    pub fn new(store: &mut ParamStore, prefix: &str, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Projection { linear: Linear::new(store, prefix, d_in, d_out, true, true)? })
    }

    pub fn forward(&self, block: &VisualTokenBlock) -> Result<VisualTokenBlock> {
        if block.width() != self.linear.in_dim() {
            return Err(ModelError::Shape(format!(
                "projection expects width {}, got {}",
                self.linear.in_dim(),
                block.width()
            )));
        }
        Ok(VisualTokenBlock { modality: block.modality, tokens: self.linear.forward(&block.tokens)? })
    }
}
