//! Small differentiable building blocks on 2-D `(tokens, features)` tensors.

use candle_core::{Tensor, D};

use crate::error::Result;
use crate::params::{Init, ParamStore};

const LN_EPS: f64 = 1e-5;

/// Affine map stored as `(in, out)` so the forward pass is a plain matmul.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        trainable: bool,
    ) -> Result<Self> {
        let std = 1.0 / (d_in as f64).sqrt();
        let weight = store.add(&format!("{name}.weight"), &[d_in, d_out], Init::Normal(std), trainable)?;
        let bias = if bias {
            Some(store.add(&format!("{name}.bias"), &[d_out], Init::Zeros, trainable)?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn from_tensors(weight: Tensor, bias: Option<Tensor>) -> Self {
        Linear { weight, bias }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.weight)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, trainable: bool) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.add(&format!("{name}.gamma"), &[dim], Init::Ones, trainable)?,
            beta: store.add(&format!("{name}.beta"), &[dim], Init::Zeros, trainable)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centred = x.broadcast_sub(&mean)?;
        let var = centred.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centred.broadcast_div(&(var + LN_EPS)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

/// `(tokens, heads * head_dim)` → `(heads, tokens, head_dim)`.
pub fn split_heads(x: &Tensor, heads: usize) -> Result<Tensor> {
    let (t, w) = x.dims2()?;
    Ok(x.reshape((t, heads, w / heads))?.transpose(0, 1)?.contiguous()?)
}

pub fn merge_heads(x: &Tensor) -> Result<Tensor> {
    let (h, t, d) = x.dims3()?;
    Ok(x.transpose(0, 1)?.contiguous()?.reshape((t, h * d))?)
}

/// Scaled dot-product attention over already projected `q`, `k`, `v`.
/// `mask`, when given, is added to the `(tq, tk)` scores of every head.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize, mask: Option<&Tensor>) -> Result<Tensor> {
    let q = split_heads(q, heads)?;
    let k = split_heads(k, heads)?;
    let v = split_heads(v, heads)?;
    let scale = 1.0 / (q.dim(2)? as f64).sqrt();
    let mut scores = (q.matmul(&k.t()?)? * scale)?;
    if let Some(m) = mask {
        scores = scores.broadcast_add(m)?;
    }
    let p = candle_nn::ops::softmax(&scores, D::Minus1)?;
    merge_heads(&p.matmul(&v)?)
}

/// Additive causal mask: 0 on and below the diagonal, a large negative above.
pub fn causal_mask(t: usize, like: &Tensor) -> Result<Tensor> {
    let data: Vec<f32> = (0..t * t)
        .map(|i| if i % t > i / t { -1e9 } else { 0.0 })
        .collect();
    Ok(Tensor::from_vec(data, (t, t), like.device())?.to_dtype(like.dtype())?)
}

/// Two-layer GELU feed-forward block.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, trainable: bool) -> Result<Self> {
        Ok(FeedForward {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, true, trainable)?,
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, true, trainable)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&self.up.forward(x)?.gelu()?)
    }
}
