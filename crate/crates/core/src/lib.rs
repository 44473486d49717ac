//! Preprocessing, report handling, synthetic phantoms and evaluation for
//! whole-body PET/CT report generation.

pub mod config;
pub mod dataset;
pub mod exec;
pub mod grammar;
pub mod labels;
pub mod metrics;
pub mod nifti_io;
pub mod llm;
pub mod ontology;
pub mod prep;
pub mod report;
pub mod synth;
pub mod volume;

pub use config::{load_config, ConfigError, ConfigSet};
pub use exec::Execution;
pub use volume::{Modality, Orientation, VolumeGrid};
