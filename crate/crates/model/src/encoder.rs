//! Frozen sliding-window volume encoder.
//!
//! The padded volume is cut into windows, every window into cubic patches;
//! patches are linearly embedded, tagged with a 3-D sine/cosine code of their
//! absolute patch coordinate and passed through a small pre-norm transformer.
//! Features of all windows are concatenated in raster window order.

use candle_core::{DType, Tensor};
use petct_core::config::EncoderConfig;
use petct_core::{Execution, Modality, VolumeGrid};

use crate::error::{ModelError, Result};
use crate::nn::{attention, FeedForward, LayerNorm, Linear};
use crate::params::ParamStore;

/// Axis length after zero-padding to a whole number of windows.
pub fn padded_len(n: usize, window: usize) -> usize {
    n.div_ceil(window).max(1) * window
}

/// Window start offsets along one axis of length `n`.
pub fn window_starts(n: usize, window: usize, stride: usize) -> Vec<usize> {
    let p = padded_len(n, window);
    let count = (p - window).div_ceil(stride) + 1;
    (0..count).map(|k| (k * stride).min(p - window)).collect()
}

/// Closed-form window count for a volume shape.
pub fn window_count(shape: [usize; 3], cfg: &EncoderConfig) -> usize {
    (0..3)
        .map(|i| {
            let p = padded_len(shape[i], cfg.window_shape[i]);
            (p - cfg.window_shape[i]).div_ceil(cfg.window_stride) + 1
        })
        .product()
}

/// Number of feature vectors `encode_volume` returns for `shape`.
pub fn feature_count(shape: [usize; 3], cfg: &EncoderConfig) -> usize {
    window_count(shape, cfg) * cfg.patches_per_window()
}

/// 3-D sine/cosine code: the width is split evenly between the three axes,
/// each half sine and half cosine; leftover channels stay zero.
pub fn sincos_3d(coords: &[[usize; 3]], width: usize) -> Vec<f32> {
    let per_axis = (width / 6) * 2;
    let half = per_axis / 2;
    let mut out = vec![0f32; coords.len() * width];
    for (row, c) in coords.iter().enumerate() {
        let base = row * width;
        for (axis, &pos) in c.iter().enumerate() {
            for k in 0..half {
                let omega = 1.0 / 10000f64.powf(k as f64 / half as f64);
                let a = pos as f64 * omega;
                out[base + axis * per_axis + k] = a.sin() as f32;
                out[base + axis * per_axis + half + k] = a.cos() as f32;
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
struct EncoderBlock {
    ln1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    ln2: LayerNorm,
    ff: FeedForward,
    heads: usize,
}

impl EncoderBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let w = x.dim(1)?;
        let h = self.ln1.forward(x)?;
        let qkv = self.qkv.forward(&h)?;
        let q = qkv.narrow(1, 0, w)?;
        let k = qkv.narrow(1, w, w)?;
        let v = qkv.narrow(1, 2 * w, w)?;
        let a = self.proj.forward(&attention(&q, &k, &v, self.heads, None)?)?;
        let x = (x + a)?;
        let f = self.ff.forward(&self.ln2.forward(&x)?)?;
        Ok((x + f)?)
    }
}

/// One window cut into patches, plus the absolute patch coordinates.
struct WindowPatches {
    voxels: Vec<f32>,
    coords: Vec<[usize; 3]>,
}

#[derive(Clone, Debug)]
pub struct VolumeEncoder {
    cfg: EncoderConfig,
    patch_embed: Linear,
    blocks: Vec<EncoderBlock>,
    norm: LayerNorm,
}

impl VolumeEncoder {
    /// Registers parameters under `prefix`; they are trainable only when
    /// `cfg.freeze_encoder` is off.
    pub fn new(store: &mut ParamStore, prefix: &str, cfg: &EncoderConfig) -> Result<Self> {
        let trainable = !cfg.freeze_encoder;
        let w = cfg.encoder_width;
        let pv: usize = cfg.patch_shape.iter().product();
        let patch_embed = Linear::new(store, &format!("{prefix}.patch_embed"), pv, w, true, trainable)?;
        let blocks = (0..cfg.encoder_depth)
            .map(|i| {
                let n = format!("{prefix}.blocks.{i}");
                Ok(EncoderBlock {
                    ln1: LayerNorm::new(store, &format!("{n}.ln1"), w, trainable)?,
                    qkv: Linear::new(store, &format!("{n}.qkv"), w, 3 * w, true, trainable)?,
                    proj: Linear::new(store, &format!("{n}.proj"), w, w, true, trainable)?,
                    ln2: LayerNorm::new(store, &format!("{n}.ln2"), w, trainable)?,
                    ff: FeedForward::new(store, &format!("{n}.ff"), w, w * cfg.encoder_mlp_ratio, trainable)?,
                    heads: cfg.encoder_heads,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let norm = LayerNorm::new(store, &format!("{prefix}.norm"), w, trainable)?;
        Ok(VolumeEncoder { cfg: cfg.clone(), patch_embed, blocks, norm })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    fn window_patches(&self, v: &VolumeGrid, start: [usize; 3]) -> WindowPatches {
        let [p0, p1, p2] = self.cfg.patch_shape;
        let n = [
            self.cfg.window_shape[0] / p0,
            self.cfg.window_shape[1] / p1,
            self.cfg.window_shape[2] / p2,
        ];
        let shape = v.shape();
        let mut voxels = Vec::with_capacity(n[0] * n[1] * n[2] * p0 * p1 * p2);
        let mut coords = Vec::with_capacity(n[0] * n[1] * n[2]);
        for px in 0..n[0] {
            for py in 0..n[1] {
                for pz in 0..n[2] {
                    let o = [start[0] + px * p0, start[1] + py * p1, start[2] + pz * p2];
                    coords.push([o[0] / p0, o[1] / p1, o[2] / p2]);
                    for ix in 0..p0 {
                        for iy in 0..p1 {
                            for iz in 0..p2 {
                                let (x, y, z) = (o[0] + ix, o[1] + iy, o[2] + iz);
                                let val = if x < shape[0] && y < shape[1] && z < shape[2] {
                                    v.values[[x, y, z]]
                                } else {
                                    0.0
                                };
                                voxels.push(val as f32);
                            }
                        }
                    }
                }
            }
        }
        WindowPatches { voxels, coords }
    }

    fn encode_window(&self, w: &WindowPatches) -> Result<Tensor> {
        let dev = &self.patch_embed.weight.device().clone();
        let dtype = self.patch_embed.weight.dtype();
        let np = w.coords.len();
        let x = Tensor::from_slice(&w.voxels, (np, w.voxels.len() / np), dev)?.to_dtype(dtype)?;
        let pos = Tensor::from_vec(sincos_3d(&w.coords, self.cfg.encoder_width), (np, self.cfg.encoder_width), dev)?
            .to_dtype(dtype)?;
        let mut h = (self.patch_embed.forward(&x)? + pos)?;
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        self.norm.forward(&h)
    }

    /// Encodes a normalized CT or SUV volume into `(windows · patches, width)` features.
    pub fn encode_volume(&self, v: &VolumeGrid, exec: Execution) -> Result<Tensor> {
        if !matches!(v.modality, Modality::CtNorm | Modality::PetSuv) {
            return Err(ModelError::InvalidInput(format!(
                "encoder expects a normalized CT or SUV volume, got {:?}",
                v.modality
            )));
        }
        if v.is_empty() {
            return Err(ModelError::InvalidInput(format!("empty volume {:?}", v.shape())));
        }
        let shape = v.shape();
        let s: Vec<Vec<usize>> = (0..3)
            .map(|i| window_starts(shape[i], self.cfg.window_shape[i], self.cfg.window_stride))
            .collect();
        let mut starts = Vec::new();
        for &x in &s[0] {
            for &y in &s[1] {
                for &z in &s[2] {
                    starts.push([x, y, z]);
                }
            }
        }
        let feats = exec.try_map(&starts, |&st| self.encode_window(&self.window_patches(v, st)))?;
        Ok(Tensor::cat(&feats, 0)?)
    }

    pub fn dtype(&self) -> DType {
        self.patch_embed.weight.dtype()
    }
}
