//! Low-rank additive adapters on frozen linear maps.

use candle_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::Linear;
use crate::params::{Init, ParamStore};

/// Inverted dropout driven by a seeded generator, so training runs repeat.
pub struct Dropout<'a> {
    pub p: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    pub fn apply(&mut self, x: &Tensor) -> Result<Tensor> {
        if self.p <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 - self.p;
        let n = x.elem_count();
        let mask: Vec<f32> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { (1.0 / keep) as f32 } else { 0.0 })
            .collect();
        let m = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
        Ok((x * m)?)
    }
}

/// `W x + b + scale · B A x`, with `A` random and `B` zero at creation.
#[derive(Clone, Debug)]
pub struct LoraLinear {
    pub base: Linear,
    pub adapter: Option<(Tensor, Tensor)>,
    pub scale: f64,
}

impl LoraLinear {
    pub fn plain(base: Linear) -> Self {
        LoraLinear { base, adapter: None, scale: 0.0 }
    }

    pub fn attach(store: &mut ParamStore, name: &str, base: Linear, rank: usize, scale: f64) -> Result<Self> {
        let (d_in, d_out) = (base.in_dim(), base.out_dim());
        let bound = 1.0 / (d_in as f64).sqrt();
        let a = store.add(&format!("{name}.a"), &[d_in, rank], Init::Uniform(bound), true)?;
        let b = store.add(&format!("{name}.b"), &[rank, d_out], Init::Zeros, true)?;
        Ok(LoraLinear { base, adapter: Some((a, b)), scale })
    }

    pub fn forward(&self, x: &Tensor, dropout: Option<&mut Dropout>) -> Result<Tensor> {
        let y = self.base.forward(x)?;
        let Some((a, b)) = &self.adapter else {
            return Ok(y);
        };
        let xin = match dropout {
            Some(d) => d.apply(x)?,
            None => x.clone(),
        };
        let delta = (xin.matmul(a)?.matmul(b)? * self.scale)?;
        Ok((y + delta)?)
    }
}
