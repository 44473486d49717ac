//! The full report generator: shared frozen volume encoder, per-modality
//! samplers and projections, prompt fusion and the LoRA-adapted decoder.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use petct_core::config::{ConfigSet, DecoderConfig, EncoderConfig, FusionConfig, GenerationConfig, LoraConfig};
use petct_core::prep::Gender;
use petct_core::report::TemplateDictionary;
use petct_core::{Execution, VolumeGrid};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::base::{BaseModel, BASE_META};
use crate::decoder::{ToyDecoder, SPECIAL_EMBEDDINGS};
use crate::encoder::VolumeEncoder;
use crate::error::{ModelError, Result};
use crate::fusion::{assemble_prompt, build_layout, PromptBundle, PromptLayout, PromptSlot, INSTRUCTION, INSTRUCTION_VERSION, PROMPT_ORDER};
use crate::generate::{generate_report, GenerationOutput, LogitsSource};
use crate::params::ParamStore;
use crate::sampler::{PerceiverSampler, Projection, SamplerDims, VisualModality, VisualTokenBlock};
use crate::vocab::{Vocab, END_OF_REPORT, SPECIAL_TOKENS};

pub const CHECKPOINT_TENSORS: &str = "trainable.safetensors";
pub const CHECKPOINT_META: &str = "checkpoint.json";

/// Prefixes of every trainable parameter group.
pub const TRAINABLE_GROUPS: [&str; 6] =
    ["ct_sampler", "pet_sampler", "ct_projection", "pet_projection", "lora", SPECIAL_EMBEDDINGS];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub lora: LoraConfig,
    pub fusion: FusionConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::from_set(&ConfigSet::default())
    }
}

impl ModelConfig {
    pub fn from_set(c: &ConfigSet) -> Self {
        ModelConfig {
            encoder: c.encoder.clone(),
            decoder: c.decoder.clone(),
            lora: c.lora.clone(),
            fusion: c.fusion.clone(),
        }
    }

    /// Small widths and token counts for fast training runs and tests.
    pub fn toy() -> Self {
        let mut c = ModelConfig::default();
        let e = &mut c.encoder;
        e.toy_dims = true;
        e.encoder_width = 64;
        e.encoder_heads = 4;
        e.encoder_mlp_ratio = 2;
        e.latent_queries = 32;
        e.output_tokens = 32;
        e.token_width = 64;
        e.perceiver_depth = 1;
        e.perceiver_heads = 4;
        e.perceiver_head_dim = 16;
        e.perceiver_ff_ratio = 2;
        e.decoder_width = 64;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate(self.encoder.decoder_width)?;
        self.lora.validate()?;
        Ok(())
    }

    /// Hash over the configuration, prompt layout and instruction version.
    pub fn fingerprint(&self, vocab: &Vocab) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("serializable config"));
        h.update(PROMPT_ORDER.as_bytes());
        h.update(INSTRUCTION_VERSION.as_bytes());
        h.update(serde_json::to_vec(vocab).expect("serializable vocab"));
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    fingerprint: String,
    config: ModelConfig,
    vocab: Vocab,
    step: usize,
}

pub struct ReportModel {
    cfg: ModelConfig,
    vocab: Vocab,
    store: ParamStore,
    encoder: VolumeEncoder,
    ct_sampler: PerceiverSampler,
    pet_sampler: PerceiverSampler,
    ct_projection: Projection,
    pet_projection: Projection,
    decoder: ToyDecoder,
    base: Option<BaseModel>,
}

pub fn default_vocab() -> Vocab {
    Vocab::build(&[INSTRUCTION]).with_special_tokens()
}

impl ReportModel {
    /// Validates `cfg` (including the fixed token counts and widths) and builds the model.
    pub fn new(cfg: ModelConfig, base: Option<BaseModel>, dtype: DType) -> Result<Self> {
        cfg.validate()?;
        Self::build(cfg, base, dtype)
    }

    /// Builds without the fixed-size checks, for toy-dimension experiments.
    /// A pretrained `base` replaces the seeded decoder weights and provides
    /// the starting values of the special-token embeddings.
    pub fn build(cfg: ModelConfig, base: Option<BaseModel>, dtype: DType) -> Result<Self> {
        let vocab = default_vocab();
        let overrides = base.as_ref().map(|b| b.tensors.clone()).unwrap_or_default();
        let mut store = ParamStore::new(cfg.encoder.seed ^ cfg.decoder.seed.rotate_left(32), dtype, Device::Cpu)
            .with_overrides(overrides);
        // Both modalities share one encoder initialization.
        let encoder = VolumeEncoder::new(&mut store, "encoder", &cfg.encoder)?;
        let dims = SamplerDims::from_config(&cfg.encoder);
        let ct_sampler = PerceiverSampler::new(&mut store, "ct_sampler", dims)?;
        let pet_sampler = PerceiverSampler::new(&mut store, "pet_sampler", dims)?;
        let dw = cfg.encoder.decoder_width;
        let ct_projection = Projection::new(&mut store, "ct_projection", dims.width, dw)?;
        let pet_projection = Projection::new(&mut store, "pet_projection", dims.width, dw)?;
        let decoder = ToyDecoder::new(
            &mut store,
            dw,
            vocab.base_len(),
            SPECIAL_TOKENS.len(),
            &cfg.decoder,
            Some(&cfg.lora),
            false,
        )?;
        Ok(ReportModel { cfg, vocab, store, encoder, ct_sampler, pet_sampler, ct_projection, pet_projection, decoder, base })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn decoder(&self) -> &ToyDecoder {
        &self.decoder
    }

    pub fn base(&self) -> Option<&BaseModel> {
        self.base.as_ref()
    }

    pub fn fingerprint(&self) -> String {
        let f = self.cfg.fingerprint(&self.vocab);
        match &self.base {
            Some(b) => hex::encode(Sha256::digest(format!("{f}:{}", b.meta.fingerprint))),
            None => f,
        }
    }

    /// Variable-length encoder features for one normalized volume.
    pub fn encode(&self, v: &VolumeGrid, exec: Execution) -> Result<Tensor> {
        self.encoder.encode_volume(v, exec)
    }

    /// Sampler output before projection.
    pub fn sample(&self, modality: VisualModality, features: &Tensor) -> Result<VisualTokenBlock> {
        let s = match modality {
            VisualModality::Ct => &self.ct_sampler,
            VisualModality::Pet => &self.pet_sampler,
        };
        Ok(VisualTokenBlock { modality, tokens: s.forward(features)? })
    }

    pub fn project(&self, block: &VisualTokenBlock) -> Result<VisualTokenBlock> {
        match block.modality {
            VisualModality::Ct => self.ct_projection.forward(block),
            VisualModality::Pet => self.pet_projection.forward(block),
        }
    }

    pub fn visual_tokens(&self, modality: VisualModality, features: &Tensor) -> Result<VisualTokenBlock> {
        self.project(&self.sample(modality, features)?)
    }

    pub fn prompt_layout(&self, template: &str) -> Result<PromptLayout> {
        let n = self.cfg.encoder.output_tokens;
        build_layout(n, n, template, INSTRUCTION, &self.vocab, self.cfg.fusion.max_input_tokens)
    }

    pub fn bundle(
        &self,
        ct_features: &Tensor,
        pet_features: &Tensor,
        center_id: u8,
        gender: Gender,
        templates: &TemplateDictionary,
    ) -> Result<PromptBundle> {
        assemble_prompt(
            self.visual_tokens(VisualModality::Ct, ct_features)?,
            self.visual_tokens(VisualModality::Pet, pet_features)?,
            center_id,
            gender,
            templates,
            INSTRUCTION,
            &self.vocab,
            self.cfg.fusion.max_input_tokens,
        )
    }

    /// Embeds a layout, pulling visual positions from the given blocks.
    pub fn embed_layout(&self, layout: &PromptLayout, ct: &VisualTokenBlock, pet: &VisualTokenBlock) -> Result<Tensor> {
        let mut pieces: Vec<Tensor> = Vec::new();
        let mut text: Vec<u32> = Vec::new();
        let mut i = 0;
        let slots = &layout.slots;
        while i < slots.len() {
            match slots[i] {
                PromptSlot::Token(t) => {
                    text.push(t);
                    i += 1;
                }
                PromptSlot::Visual(m, start) => {
                    if !text.is_empty() {
                        pieces.push(self.decoder.embed(&std::mem::take(&mut text))?);
                    }
                    let mut j = i;
                    while j < slots.len() && matches!(slots[j], PromptSlot::Visual(mm, _) if mm == m) {
                        j += 1;
                    }
                    let block = match m {
                        VisualModality::Ct => ct,
                        VisualModality::Pet => pet,
                    };
                    pieces.push(block.tokens.narrow(0, start as usize, j - i)?);
                    i = j;
                }
            }
        }
        if !text.is_empty() {
            pieces.push(self.decoder.embed(&text)?);
        }
        Ok(Tensor::cat(&pieces, 0)?)
    }

    pub fn embed_bundle(&self, b: &PromptBundle) -> Result<Tensor> {
        self.embed_layout(&b.layout, &b.ct, &b.pet)
    }

    /// Mean cross-entropy over `target` given an embedded prompt. The
    /// prompt positions carry no loss.
    pub fn sequence_loss(&self, prompt: &Tensor, target: &[u32], rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        if target.is_empty() {
            return Err(ModelError::Data("empty target report".into()));
        }
        let p = prompt.dim(0)?;
        let input = if target.len() > 1 {
            Tensor::cat(&[prompt, &self.decoder.embed(&target[..target.len() - 1])?], 0)?
        } else {
            prompt.clone()
        };
        let hidden = self.decoder.hidden(&input, rng)?.narrow(0, p - 1, target.len())?;
        let logits = self.decoder.logits(&hidden)?;
        let t = Tensor::new(target, prompt.device())?;
        Ok(candle_nn::loss::cross_entropy(&logits, &t)?)
    }

    pub fn generate(&self, bundle: &PromptBundle, cfg: &GenerationConfig) -> Result<GenerationOutput> {
        let prompt = self.embed_bundle(bundle)?;
        let mut src = PromptedDecoder { model: self, prompt };
        generate_report(&mut src, &self.vocab, cfg)
    }

    pub fn stop_id(&self) -> u32 {
        self.vocab.special(END_OF_REPORT)
    }

    pub fn save_checkpoint(&self, dir: &Path, step: usize) -> Result<()> {
        let err = |m: String| ModelError::Checkpoint { path: dir.display().to_string(), message: m };
        std::fs::create_dir_all(dir).map_err(|e| err(e.to_string()))?;
        let tensors: HashMap<String, Tensor> =
            self.store.trainable().map(|(n, v)| (n.to_string(), v.as_tensor().clone())).collect();
        candle_core::safetensors::save(&tensors, dir.join(CHECKPOINT_TENSORS))?;
        let meta = CheckpointMeta { fingerprint: self.fingerprint(), config: self.cfg.clone(), vocab: self.vocab.clone(), step };
        let text = serde_json::to_string_pretty(&meta).expect("serializable meta");
        std::fs::write(dir.join(CHECKPOINT_META), text + "\n").map_err(|e| err(e.to_string()))?;
        if let Some(b) = &self.base {
            b.save(dir)?;
        }
        Ok(())
    }

    /// Rebuilds frozen parts from the stored configuration and restores the
    /// trainable tensors. Returns the model and its training step.
    pub fn load_checkpoint(dir: &Path, dtype: DType) -> Result<(ReportModel, usize)> {
        let err = |m: String| ModelError::Checkpoint { path: dir.display().to_string(), message: m };
        let text = std::fs::read_to_string(dir.join(CHECKPOINT_META)).map_err(|e| err(e.to_string()))?;
        let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let base = if dir.join(BASE_META).exists() { Some(BaseModel::load(dir)?) } else { None };
        let model = ReportModel::build(meta.config, base, dtype)?;
        if meta.vocab.restore() != model.vocab {
            return Err(err("vocabulary differs from this build".into()));
        }
        if model.fingerprint() != meta.fingerprint {
            return Err(err("configuration fingerprint mismatch".into()));
        }
        let tensors = candle_core::safetensors::load(dir.join(CHECKPOINT_TENSORS), &Device::Cpu)?;
        for (name, var) in model.store.trainable() {
            let t = tensors.get(name).ok_or_else(|| err(format!("missing tensor {name}")))?;
            if t.dims() != var.dims() {
                return Err(err(format!("tensor {name} has shape {:?}, expected {:?}", t.dims(), var.dims())));
            }
            var.set(&t.to_dtype(dtype)?)?;
        }
        if tensors.len() != model.store.trainable().count() {
            return Err(err("checkpoint holds unexpected tensors".into()));
        }
        Ok((model, meta.step))
    }
}

struct PromptedDecoder<'a> {
    model: &'a ReportModel,
    prompt: Tensor,
}

impl LogitsSource for PromptedDecoder<'_> {
    fn next_logits(&mut self, generated: &[u32]) -> Result<Vec<f32>> {
        let input = if generated.is_empty() {
            self.prompt.clone()
        } else {
            Tensor::cat(&[&self.prompt, &self.model.decoder.embed(generated)?], 0)?
        };
        let t = input.dim(0)?;
        let h = self.model.decoder.hidden(&input, None)?.narrow(0, t - 1, 1)?;
        Ok(self.model.decoder.logits(&h)?.squeeze(0)?.to_dtype(DType::F32)?.to_vec1::<f32>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::pretrain_base;
    use crate::train::{TrainExample, Trainer};
    use petct_core::config::{PretrainConfig, TrainConfig};
    use petct_core::Modality;
    use std::collections::BTreeSet;

    const REPORT: &str = "CHEST: mild uptake lesion with focal lesion in liver.";

    fn tiny() -> ModelConfig {
        let mut c = ModelConfig::toy();
        c.encoder.encoder_width = 16;
        c.encoder.encoder_heads = 2;
        c.encoder.latent_queries = 4;
        c.encoder.output_tokens = 4;
        c.encoder.token_width = 16;
        c.encoder.perceiver_heads = 2;
        c.encoder.perceiver_head_dim = 8;
        c.encoder.decoder_width = 16;
        c.decoder.layers = 1;
        c.decoder.heads = 2;
        c
    }

    fn example(m: &ReportModel, level: f64) -> TrainExample {
        let ct = VolumeGrid::filled([8, 8, 8], level, [3.0; 3], Modality::CtNorm);
        let pet = VolumeGrid::filled([8, 8, 8], 2.0 * level, [3.0; 3], Modality::PetSuv);
        TrainExample::from_volumes(m, "c", &ct, &pet, "CHEST: chest otherwise unremarkable.", REPORT, Execution::Sequential)
            .unwrap()
    }

    fn train_cfg() -> TrainConfig {
        TrainConfig { base_lr: 1e-2, warmup_steps: 0, micro_batch: 1, accum_steps: 2, effective_batch: 2, ..TrainConfig::default() }
    }

    #[test]
    fn training_touches_exactly_the_trainable_groups() {
        let m = ReportModel::build(tiny(), None, DType::F32).unwrap();
        let exs = [example(&m, 0.3), example(&m, 0.7)];
        let frozen = m.store().frozen_hash().unwrap();
        let hashes = |m: &ReportModel| -> Vec<(String, String)> {
            m.store().iter().map(|(n, _)| (n.to_string(), m.store().tensor_hash(n).unwrap().unwrap())).collect()
        };
        let before = hashes(&m);
        let declared: BTreeSet<String> = m.store().trainable().map(|(n, _)| n.to_string()).collect();
        assert!(declared.iter().all(|n| TRAINABLE_GROUPS.iter().any(|g| n.starts_with(g))));
        let mut tr = Trainer::new(&m, train_cfg()).unwrap();
        for _ in 0..3 {
            let r = tr.training_step(&[&exs[0], &exs[1]]).unwrap();
            assert_eq!(r.grad_params.into_iter().collect::<BTreeSet<_>>(), declared);
        }
        assert_eq!(m.store().frozen_hash().unwrap(), frozen);
        let changed: BTreeSet<String> =
            before.iter().zip(hashes(&m)).filter(|(a, b)| a.1 != b.1).map(|(a, _)| a.0.clone()).collect();
        assert_eq!(changed, declared);
    }

    #[test]
    fn greedy_generation_is_deterministic() {
        let m = ReportModel::build(tiny(), None, DType::F32).unwrap();
        let b = example(&m, 0.5).bundle(&m).unwrap();
        let g = GenerationConfig { greedy: true, max_new_tokens: 12, ..GenerationConfig::default() };
        let first = m.generate(&b, &g).unwrap();
        for _ in 0..9 {
            assert_eq!(m.generate(&b, &g).unwrap(), first);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = tiny();
        let pc = PretrainConfig { steps: 1, batch: 1, ..PretrainConfig::default() };
        let base = pretrain_base(
            cfg.encoder.decoder_width,
            &cfg.decoder,
            &pc,
            cfg.encoder.output_tokens,
            &default_vocab(),
            &TemplateDictionary::fixtures(),
            cfg.fusion.max_input_tokens,
            DType::F32,
            |_, _| {},
        )
        .unwrap();
        let m = ReportModel::build(cfg, Some(base), DType::F32).unwrap();
        let ex = example(&m, 0.4);
        Trainer::new(&m, train_cfg()).unwrap().training_step(&[&ex]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save_checkpoint(dir.path(), 1).unwrap();
        let (back, step) = ReportModel::load_checkpoint(dir.path(), DType::F32).unwrap();
        assert_eq!(step, 1);
        assert_eq!(back.fingerprint(), m.fingerprint());
        assert_eq!(back.store().hash_where(|_, _| true).unwrap(), m.store().hash_where(|_, _| true).unwrap());

        std::fs::remove_file(dir.path().join(crate::base::BASE_META)).unwrap();
        assert!(matches!(ReportModel::load_checkpoint(dir.path(), DType::F32), Err(ModelError::Checkpoint { .. })));
    }
}
