//! Text-generation metrics and the region-label clinical efficacy score.

pub mod bleu;
pub mod extract;
pub mod meteor;
pub mod rouge;
pub mod score;
pub mod tokenize;

use thiserror::Error;

pub use bleu::{corpus_bleu, BleuStats};
pub use extract::{extract_labels, Backend, ExtractionCache, LlmExtractor};
pub use meteor::{corpus_meteor, meteor};
pub use rouge::{corpus_rouge_l, rouge_l};
pub use score::{
    confusion_counts, f1_from_precision_recall, f1_score, petrg_score, score_labels, ClassCounts, ClassScore, ScoreReport,
    Variant,
};
pub use tokenize::{segment_tokens, DictSegmenter, SegmentMode};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric undefined on an empty corpus")]
    EmptyCorpus,
    #[error("candidate and reference counts differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
}
