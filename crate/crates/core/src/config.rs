//! Typed home for every tunable constant of the pipeline.
//!
//! Defaults reproduce the published training and inference setup; a config
//! file only needs to list the fields it overrides. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config constraint violated for `{key}`: {message}")]
    Constraint { key: String, message: String },
}

fn constraint(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepConfig {
    pub target_spacing_mm: [f64; 3],
    pub hu_clip: [f64; 2],
    pub body_margin_slices: usize,
    pub thigh_extension_fraction: f64,
    pub thigh_extension_cap_slices: usize,
    pub region_buffer_slices: usize,
    pub f18_half_life_s: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            target_spacing_mm: [1.5, 1.5, 3.0],
            hu_clip: [-1000.0, 1000.0],
            body_margin_slices: 10,
            thigh_extension_fraction: 0.2,
            thigh_extension_cap_slices: 50,
            region_buffer_slices: 10,
            f18_half_life_s: 6586.2,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.target_spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return Err(constraint("prep.target_spacing_mm", "all components must be > 0"));
        }
        if !(self.hu_clip[0] < self.hu_clip[1]) {
            return Err(constraint("prep.hu_clip", "lower bound must be below upper bound"));
        }
        if self.body_margin_slices == 0 {
            return Err(constraint("prep.body_margin_slices", "must be positive"));
        }
        if !(self.thigh_extension_fraction > 0.0 && self.thigh_extension_fraction < 1.0) {
            return Err(constraint("prep.thigh_extension_fraction", "must lie in (0, 1)"));
        }
        if self.thigh_extension_cap_slices == 0 {
            return Err(constraint("prep.thigh_extension_cap_slices", "must be positive"));
        }
        if self.region_buffer_slices == 0 {
            return Err(constraint("prep.region_buffer_slices", "must be positive"));
        }
        if !(self.f18_half_life_s > 0.0) {
            return Err(constraint("prep.f18_half_life_s", "must be positive"));
        }
        Ok(())
    }
}

/// Volume encoder, perceiver sampler and projection shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub window_shape: [usize; 3],
    pub window_stride: usize,
    pub patch_shape: [usize; 3],
    pub encoder_width: usize,
    pub encoder_depth: usize,
    pub encoder_heads: usize,
    pub encoder_mlp_ratio: usize,
    pub latent_queries: usize,
    pub output_tokens: usize,
    pub token_width: usize,
    pub perceiver_depth: usize,
    pub perceiver_heads: usize,
    pub perceiver_head_dim: usize,
    pub perceiver_ff_ratio: usize,
    pub decoder_width: usize,
    pub freeze_encoder: bool,
    /// Lifts the fixed 128 x 768 visual token shape for small-scale runs.
    pub toy_dims: bool,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            window_shape: [32, 32, 32],
            window_stride: 32,
            patch_shape: [4, 4, 4],
            encoder_width: 768,
            encoder_depth: 1,
            encoder_heads: 12,
            encoder_mlp_ratio: 4,
            latent_queries: 128,
            output_tokens: 128,
            token_width: 768,
            perceiver_depth: 2,
            perceiver_heads: 8,
            perceiver_head_dim: 64,
            perceiver_ff_ratio: 4,
            decoder_width: 64,
            freeze_encoder: true,
            toy_dims: false,
            seed: 17,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for i in 0..3 {
            if self.patch_shape[i] == 0 || self.window_shape[i] == 0 {
                return Err(constraint("encoder.window_shape", "window and patch must be non-zero"));
            }
            if self.window_shape[i] % self.patch_shape[i] != 0 {
                return Err(constraint(
                    "encoder.patch_shape",
                    format!(
                        "window {:?} is not divisible by patch {:?}",
                        self.window_shape, self.patch_shape
                    ),
                ));
            }
        }
        if self.window_stride == 0 || self.window_shape.iter().any(|&w| self.window_stride > w) {
            return Err(constraint("encoder.window_stride", "must lie in 1..=window size"));
        }
        if self.latent_queries == 0 {
            return Err(constraint("encoder.latent_queries", "must be positive"));
        }
        if !self.toy_dims && self.latent_queries != 128 {
            return Err(constraint("encoder.latent_queries", "must be 128"));
        }
        if self.output_tokens != self.latent_queries {
            return Err(constraint("encoder.output_tokens", "must equal latent_queries"));
        }
        if !self.toy_dims && self.token_width != 768 {
            return Err(constraint("encoder.token_width", "must be 768"));
        }
        if self.encoder_width != self.token_width {
            return Err(constraint("encoder.encoder_width", "must equal token_width"));
        }
        if self.encoder_heads == 0 || self.encoder_width % self.encoder_heads != 0 {
            return Err(constraint("encoder.encoder_heads", "must divide encoder_width"));
        }
        if self.encoder_depth == 0 || self.perceiver_depth == 0 {
            return Err(constraint("encoder.perceiver_depth", "depths must be positive"));
        }
        if self.perceiver_heads == 0 || self.perceiver_head_dim == 0 {
            return Err(constraint("encoder.perceiver_heads", "must be positive"));
        }
        if self.decoder_width == 0 {
            return Err(constraint("encoder.decoder_width", "must be positive"));
        }
        Ok(())
    }

    /// Patches per window along each axis.
    pub fn patches_per_window(&self) -> usize {
        (0..3)
            .map(|i| self.window_shape[i] / self.patch_shape[i])
            .product()
    }
}

/// Toy stand-in for the pretrained language model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub ff_ratio: usize,
    pub max_positions: usize,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            layers: 2,
            heads: 4,
            ff_ratio: 4,
            max_positions: 4096,
            seed: 23,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self, width: usize) -> Result<(), ConfigError> {
        if self.layers == 0 {
            return Err(constraint("decoder.layers", "must be positive"));
        }
        if self.heads == 0 || width % self.heads != 0 {
            return Err(constraint("decoder.heads", "must divide encoder.decoder_width"));
        }
        if self.ff_ratio == 0 {
            return Err(constraint("decoder.ff_ratio", "must be positive"));
        }
        Ok(())
    }
}

/// Language-model pretraining of the toy base decoder on synthetic
/// interleaved sequences. Its result is frozen before adapter training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    pub max_lesions: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 300,
            batch: 8,
            lr: 3e-3,
            warmup_steps: 20,
            max_lesions: 3,
            seed: 31,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.batch == 0 {
            return Err(constraint("pretrain.batch", "must be positive"));
        }
        if !(self.lr > 0.0) {
            return Err(constraint("pretrain.lr", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
    pub target_matrices: Vec<String>,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: 8,
            alpha: 32.0,
            dropout: 0.1,
            target_matrices: vec!["query".into(), "value".into()],
        }
    }
}

impl LoraConfig {
    pub const KNOWN_TARGETS: [&'static str; 4] = ["query", "key", "value", "output"];

    /// Multiplier applied to the low-rank update `B·A`.
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rank < 1 {
            return Err(constraint("lora.rank", "must be >= 1"));
        }
        if !(self.alpha > 0.0) {
            return Err(constraint("lora.alpha", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(constraint("lora.dropout", "must lie in [0, 1)"));
        }
        for t in &self.target_matrices {
            if !Self::KNOWN_TARGETS.contains(&t.as_str()) {
                return Err(constraint(
                    "lora.target_matrices",
                    format!("unknown target matrix {t:?}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    LinearWarmupConstant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adamw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMask {
    ReportTokensOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub schedule: LrSchedule,
    pub epochs: usize,
    pub micro_batch: usize,
    pub accum_steps: usize,
    pub effective_batch: usize,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub loss_mask: LossMask,
    /// Hard cap on optimizer steps; 0 means "run all epochs".
    pub max_steps: usize,
    /// Train on the four regional image-report pairs when the dataset has them.
    pub region_wise: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 5e-5,
            warmup_steps: 100,
            schedule: LrSchedule::LinearWarmupConstant,
            epochs: 30,
            micro_batch: 4,
            accum_steps: 4,
            effective_batch: 16,
            optimizer: OptimizerKind::Adamw,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss_mask: LossMask::ReportTokensOnly,
            max_steps: 0,
            region_wise: false,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.base_lr > 0.0) {
            return Err(constraint("train.base_lr", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(constraint("train.epochs", "must be positive"));
        }
        if self.micro_batch == 0 || self.accum_steps == 0 {
            return Err(constraint("train.micro_batch", "micro_batch and accum_steps must be positive"));
        }
        if self.effective_batch != self.micro_batch * self.accum_steps {
            return Err(constraint(
                "train.effective_batch",
                format!(
                    "{} != micro_batch {} x accum_steps {}",
                    self.effective_batch, self.micro_batch, self.accum_steps
                ),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(constraint("train.beta1", "betas must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(constraint("train.weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub top_p: f64,
    pub temperature: f64,
    pub repetition_penalty: f64,
    pub max_new_tokens: usize,
    pub stop_token: String,
    pub greedy: bool,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            top_p: 0.9,
            temperature: 0.7,
            repetition_penalty: 1.05,
            max_new_tokens: 1024,
            stop_token: "[end-of-report]".into(),
            greedy: false,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(constraint("generation.top_p", "must lie in (0, 1]"));
        }
        if !(self.temperature > 0.0) {
            return Err(constraint("generation.temperature", "must be positive"));
        }
        if !(self.repetition_penalty > 0.0) {
            return Err(constraint("generation.repetition_penalty", "must be positive"));
        }
        if self.max_new_tokens == 0 {
            return Err(constraint("generation.max_new_tokens", "must be positive"));
        }
        if self.stop_token.is_empty() {
            return Err(constraint("generation.stop_token", "must be non-empty"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub max_input_tokens: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            max_input_tokens: 2048,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    /// OpenAI-compatible chat completions URL.
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_retries: usize,
    pub max_concurrency: usize,
    /// Append-only cache of extraction responses; empty disables caching.
    pub cache_path: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: String::new(),
            model_id: "extractor".into(),
            api_key_env: "PETCT_LLM_API_KEY".into(),
            max_retries: 3,
            max_concurrency: 4,
            cache_path: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Drop classes whose F1 denominator is zero from the macro averages.
    pub exclude_empty_classes: bool,
    pub llm: LlmConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            exclude_empty_classes: false,
            llm: LlmConfig::default(),
        }
    }
}

/// Shape of generated phantom cases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub volume_shape: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub max_lesions: usize,
    pub centers: Vec<u8>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            volume_shape: [16, 16, 24],
            spacing_mm: [3.0, 3.0, 4.0],
            max_lesions: 3,
            centers: vec![1, 2, 3, 4],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.volume_shape.iter().any(|&d| d < 8) {
            return Err(constraint("synth.volume_shape", "every axis must be >= 8 voxels"));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return Err(constraint("synth.spacing_mm", "must be positive"));
        }
        if self.centers.is_empty() {
            return Err(constraint("synth.centers", "at least one center required"));
        }
        Ok(())
    }
}

/// Every config section, as read from one TOML file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigSet {
    pub prep: PrepConfig,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub pretrain: PretrainConfig,
    pub lora: LoraConfig,
    pub train: TrainConfig,
    pub generation: GenerationConfig,
    pub fusion: FusionConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

impl ConfigSet {
    pub fn from_toml_str(text: &str) -> Result<ConfigSet, ConfigError> {
        let cfg: ConfigSet = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.prep.validate()?;
        self.encoder.validate()?;
        self.decoder.validate(self.encoder.decoder_width)?;
        self.pretrain.validate()?;
        self.lora.validate()?;
        self.train.validate()?;
        self.generation.validate()?;
        if self.fusion.max_input_tokens == 0 {
            return Err(constraint("fusion.max_input_tokens", "must be positive"));
        }
        self.synth.validate()?;
        Ok(())
    }

    /// Canonical TOML rendering; `load(dump(x)) == x`.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Hex SHA-256 over the canonical JSON of every section.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is always serializable");
        hex::encode(Sha256::digest(&json))
    }
}

/// Reads and validates a config file. An empty file yields the defaults.
pub fn load_config(path: &Path) -> Result<ConfigSet, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ConfigSet::from_toml_str(&text)
}
