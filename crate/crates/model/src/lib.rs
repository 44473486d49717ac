//! Volume encoding, prompt fusion, LoRA decoder training and report
//! generation on top of `petct-core`.

pub mod base;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod generate;
pub mod lora;
pub mod model;
pub mod nn;
pub mod params;
pub mod sampler;
pub mod train;
pub mod vocab;

pub use error::{ModelError, Result};
pub use model::{ModelConfig, ReportModel};
pub use sampler::{VisualModality, VisualTokenBlock};
