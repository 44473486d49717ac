//! Pretraining of the toy base decoder.
//!
//! The base model stands in for a pretrained language model. It is trained
//! with every decoder weight free on synthetic interleaved sequences laid out
//! exactly like a fine-tuning prompt, except that the visual spans carry word
//! embeddings: slot `r` of the PET span holds the uptake word of region `r`,
//! slot `r` of the CT span the first density word, and the remaining slots
//! hold `<pad>`. Fine-tuning then has to map volumes into that word space.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use petct_core::config::{DecoderConfig, PretrainConfig, SynthConfig};
use petct_core::grammar::{density_phrase, uptake_phrase};
use petct_core::labels::ReportLabels;
use petct_core::ontology::RegionId;
use petct_core::report::TemplateDictionary;
use petct_core::synth::{render_findings, PhantomSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decoder::ToyDecoder;
use crate::error::{ModelError, Result};
use crate::fusion::{build_layout, PromptSlot, INSTRUCTION};
use crate::params::ParamStore;
use crate::sampler::VisualModality;
use crate::train::make_target;
use crate::vocab::{Vocab, PAD, SPECIAL_TOKENS};

pub const SLOT_CAPTION_VERSION: &str = "region-slot-v1";
pub const BASE_TENSORS: &str = "base_decoder.safetensors";
pub const BASE_META: &str = "base_decoder.json";

/// Word ids placed in the visual slots of one modality.
pub fn slot_caption(labels: &ReportLabels, modality: VisualModality, slots: usize, vocab: &Vocab) -> Vec<u32> {
    let pad = vocab.id(PAD).expect("reserved token");
    let mut out = vec![pad; slots];
    for (i, r) in RegionId::all().enumerate().take(slots) {
        let l = labels.get(r);
        let word = match modality {
            VisualModality::Pet => uptake_phrase(l.uptake),
            VisualModality::Ct => density_phrase(l.density).split(' ').next().expect("non-empty phrase"),
        };
        out[i] = vocab.id(word).unwrap_or_else(|| vocab.unk());
    }
    out
}

/// Pretraining inputs for one synthetic report: full token sequence and target.
pub fn pretrain_sequence(
    labels: &ReportLabels,
    template: &str,
    visual_slots: usize,
    vocab: &Vocab,
    limit: usize,
) -> Result<(Vec<u32>, Vec<u32>)> {
    let layout = build_layout(visual_slots, visual_slots, template, INSTRUCTION, vocab, limit)?;
    let ct = slot_caption(labels, VisualModality::Ct, visual_slots, vocab);
    let pet = slot_caption(labels, VisualModality::Pet, visual_slots, vocab);
    let prompt = layout
        .slots
        .iter()
        .map(|s| match *s {
            PromptSlot::Token(t) => t,
            PromptSlot::Visual(VisualModality::Ct, i) => ct[i as usize],
            PromptSlot::Visual(VisualModality::Pet, i) => pet[i as usize],
        })
        .collect();
    let target = make_target(vocab, &render_findings(labels, template))?;
    Ok((prompt, target))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseMeta {
    pub fingerprint: String,
    pub losses: Vec<f64>,
}

/// Frozen base decoder weights, keyed by parameter name.
#[derive(Clone, Debug)]
pub struct BaseModel {
    pub tensors: BTreeMap<String, Tensor>,
    pub meta: BaseMeta,
}

pub fn base_fingerprint(width: usize, dcfg: &DecoderConfig, pcfg: &PretrainConfig, visual_slots: usize, vocab: &Vocab) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&(width, dcfg, pcfg, visual_slots, SLOT_CAPTION_VERSION)).expect("serializable"));
    h.update(serde_json::to_vec(vocab).expect("serializable"));
    hex::encode(h.finalize())
}

impl BaseModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let err = |m: String| ModelError::Checkpoint { path: dir.display().to_string(), message: m };
        std::fs::create_dir_all(dir).map_err(|e| err(e.to_string()))?;
        let map: std::collections::HashMap<String, Tensor> =
            self.tensors.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        candle_core::safetensors::save(&map, dir.join(BASE_TENSORS))?;
        let text = serde_json::to_string_pretty(&self.meta).expect("serializable meta");
        std::fs::write(dir.join(BASE_META), text + "\n").map_err(|e| err(e.to_string()))
    }

    pub fn load(dir: &Path) -> Result<BaseModel> {
        let err = |m: String| ModelError::Checkpoint { path: dir.display().to_string(), message: m };
        let text = std::fs::read_to_string(dir.join(BASE_META)).map_err(|e| err(e.to_string()))?;
        let meta: BaseMeta = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let tensors = candle_core::safetensors::load(dir.join(BASE_TENSORS), &Device::Cpu)?
            .into_iter()
            .collect();
        Ok(BaseModel { tensors, meta })
    }
}

/// Trains the base decoder from its seeded initialization. Every step draws
/// fresh synthetic reports, so the run is a pure function of the configs.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_base(
    width: usize,
    dcfg: &DecoderConfig,
    pcfg: &PretrainConfig,
    visual_slots: usize,
    vocab: &Vocab,
    templates: &TemplateDictionary,
    limit: usize,
    dtype: DType,
    mut on_step: impl FnMut(usize, f64),
) -> Result<BaseModel> {
    pcfg.validate()?;
    let centers = templates.centers();
    if centers.is_empty() {
        return Err(ModelError::Data("no templates for pretraining".into()));
    }
    let mut store = ParamStore::new(dcfg.seed, dtype, Device::Cpu);
    let decoder = ToyDecoder::new(&mut store, width, vocab.base_len(), SPECIAL_TOKENS.len(), dcfg, None, true)?;
    let params = ParamsAdamW { lr: 0.0, ..ParamsAdamW::default() };
    let mut opt = AdamW::new(store.trainable_vars(), params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(pcfg.seed);
    let synth = SynthConfig { max_lesions: pcfg.max_lesions, centers: centers.clone(), ..SynthConfig::default() };
    let mut losses = Vec::with_capacity(pcfg.steps);
    for step in 0..pcfg.steps {
        let warm = if pcfg.warmup_steps == 0 { 1.0 } else { ((step + 1) as f64 / pcfg.warmup_steps as f64).min(1.0) };
        opt.set_learning_rate(pcfg.lr * warm);
        let mut total: Option<Tensor> = None;
        for j in 0..pcfg.batch {
            let seed = pcfg.seed.wrapping_mul(1_000_003).wrapping_add((step * pcfg.batch + j) as u64);
            let spec = PhantomSpec::random(seed, &synth);
            let template = templates.lookup(spec.center_id, spec.gender)?;
            let (prompt, target) = pretrain_sequence(&spec.labels(), template, visual_slots, vocab, limit)?;
            let mut ids = prompt.clone();
            ids.extend_from_slice(&target[..target.len() - 1]);
            let h = decoder.hidden(&decoder.embed(&ids)?, Some(&mut rng))?;
            let logits = decoder.logits(&h.narrow(0, prompt.len() - 1, target.len())?)?;
            let l = candle_nn::loss::cross_entropy(&logits, &Tensor::new(target.as_slice(), &Device::Cpu)?)?;
            total = Some(match total {
                Some(t) => (t + l)?,
                None => l,
            });
        }
        let loss = (total.expect("batch is non-empty") / pcfg.batch as f64)?;
        let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        opt.backward_step(&loss)?;
        losses.push(value);
        on_step(step, value);
    }
    let tensors = store.export(|_| true);
    let fingerprint = base_fingerprint(width, dcfg, pcfg, visual_slots, vocab);
    Ok(BaseModel { tensors, meta: BaseMeta { fingerprint, losses } })
}
