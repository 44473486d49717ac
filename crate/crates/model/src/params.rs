//! Named parameter registry.
//!
//! Every tensor the model owns is registered under a dotted name, either as
//! a frozen plain tensor or as a trainable [`Var`]. Initial values are drawn
//! from a generator seeded by `(seed, name)`, so frozen weights can be
//! regenerated from the seed alone and construction order does not matter.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{ModelError, Result};

#[derive(Clone, Debug)]
pub enum Param {
    Frozen(Tensor),
    Trainable(Var),
}

impl Param {
    pub fn tensor(&self) -> &Tensor {
        match self {
            Param::Frozen(t) => t,
            Param::Trainable(v) => v.as_tensor(),
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, Param::Trainable(_))
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
    Uniform(f64),
}

#[derive(Debug)]
pub struct ParamStore {
    pub device: Device,
    pub dtype: DType,
    seed: u64,
    entries: BTreeMap<String, Param>,
    overrides: BTreeMap<String, Tensor>,
}

fn name_seed(seed: u64, name: &str) -> u64 {
    let h = Sha256::digest(name.as_bytes());
    seed ^ u64::from_le_bytes(h[..8].try_into().unwrap())
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: Device) -> Self {
        ParamStore { device, dtype, seed, entries: BTreeMap::new(), overrides: BTreeMap::new() }
    }

    /// Values used instead of the seeded initialization for matching names.
    pub fn with_overrides(mut self, overrides: BTreeMap<String, Tensor>) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn init_tensor(&self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(self.seed, name));
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal(std) => {
                let d = Normal::new(0.0, std).expect("finite std");
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
            Init::Uniform(b) => (0..n).map(|_| rng.gen_range(-b..=b)).collect(),
        };
        Ok(Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?)
    }

    /// Registers a parameter. Re-registering a name replaces it.
    pub fn add(&mut self, name: &str, shape: &[usize], init: Init, trainable: bool) -> Result<Tensor> {
        let t = match self.overrides.get(name) {
            Some(o) if o.dims() == shape => o.to_dtype(self.dtype)?,
            Some(o) => {
                return Err(ModelError::Shape(format!(
                    "override for {name} has shape {:?}, expected {shape:?}",
                    o.dims()
                )))
            }
            None => self.init_tensor(name, shape, init)?,
        };
        let p = if trainable { Param::Trainable(Var::from_tensor(&t)?) } else { Param::Frozen(t) };
        let out = p.tensor().clone();
        self.entries.insert(name.to_string(), p);
        Ok(out)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.entries.iter().filter_map(|(k, v)| match v {
            Param::Trainable(var) => Some((k.as_str(), var)),
            Param::Frozen(_) => None,
        })
    }

    pub fn frozen(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().filter_map(|(k, v)| match v {
            Param::Frozen(t) => Some((k.as_str(), t)),
            Param::Trainable(_) => None,
        })
    }

    /// Detached copies of the parameters whose names satisfy `keep`.
    pub fn export(&self, mut keep: impl FnMut(&str) -> bool) -> BTreeMap<String, Tensor> {
        self.entries
            .iter()
            .filter(|(n, _)| keep(n))
            .map(|(n, p)| (n.clone(), p.tensor().detach()))
            .collect()
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.trainable().map(|(_, v)| v.clone()).collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().map(|(_, v)| v.elem_count()).sum()
    }

    /// SHA-256 over names and raw little-endian values of the selected tensors.
    pub fn hash_where(&self, mut keep: impl FnMut(&str, &Param) -> bool) -> Result<String> {
        let mut h = Sha256::new();
        for (name, p) in self.entries.iter() {
            if !keep(name, p) {
                continue;
            }
            h.update(name.as_bytes());
            for x in p.tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()? {
                h.update(x.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn frozen_hash(&self) -> Result<String> {
        self.hash_where(|_, p| !p.is_trainable())
    }

    pub fn tensor_hash(&self, name: &str) -> Result<Option<String>> {
        if self.entries.contains_key(name) {
            self.hash_where(|n, _| n == name).map(Some)
        } else {
            Ok(None)
        }
    }
}
