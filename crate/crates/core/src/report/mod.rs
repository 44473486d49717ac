//! Report text: cleaning, field parsing, center/gender templates and
//! region-wise splitting.

pub mod normalize;
pub mod parse;
pub mod split;
pub mod templates;

use thiserror::Error;

use crate::prep::Gender;

pub use normalize::normalize_report_text;
pub use parse::{parse_report_fields, ReportRecord};
pub use split::{split_report_by_region, LlmSplitter, RegionTexts, RuleSplitter, Splitter};
pub use templates::{fixture_template, TemplateDictionary};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report parse error: {0}")]
    Parse(String),
    #[error("no template registered for center {center} ({gender:?})")]
    UnknownCenter { center: u8, gender: Gender },
    #[error("template file {path}: {message}")]
    TemplateFile { path: String, message: String },
    #[error("region split failed: {message}; raw response: {raw:?}")]
    Split { message: String, raw: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
