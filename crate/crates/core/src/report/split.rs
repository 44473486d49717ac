use serde::Deserialize;

use crate::grammar::section_marker;
use crate::llm::ChatClient;
use crate::prep::BodyRegion;

use super::ReportError;

/// Findings text per coarse region, in [`BodyRegion::ALL`] order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegionTexts(pub [String; 4]);

impl RegionTexts {
    pub fn get(&self, r: BodyRegion) -> &str {
        &self.0[r.index()]
    }

    pub fn join(&self) -> String {
        self.0
            .iter()
            .filter(|s| !s.is_empty())
            .cloned()
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub trait Splitter {
    fn split(&self, findings: &str) -> Result<RegionTexts, ReportError>;
}

pub fn split_report_by_region(
    findings: &str,
    splitter: &dyn Splitter,
) -> Result<RegionTexts, ReportError> {
    splitter.split(findings)
}

/// Splits on the section markers of the synthetic grammar. Each marker must
/// open a line and the four must appear once each, in report order.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleSplitter;

impl Splitter for RuleSplitter {
    fn split(&self, findings: &str) -> Result<RegionTexts, ReportError> {
        if findings.trim().is_empty() {
            return Ok(RegionTexts::default());
        }
        let fail = |message: String| ReportError::Split { message, raw: findings.to_string() };
        let mut out: [Vec<&str>; 4] = Default::default();
        let mut current: Option<usize> = None;
        for line in findings.lines() {
            let t = line.trim_start();
            let opened = BodyRegion::ALL
                .iter()
                .position(|&g| t.starts_with(section_marker(g)));
            match (opened, current) {
                (Some(i), cur) => {
                    let expected = cur.map_or(0, |c| c + 1);
                    if i != expected {
                        return Err(fail(format!(
                            "section {} found where {} was expected",
                            section_marker(BodyRegion::ALL[i]),
                            BodyRegion::ALL
                                .get(expected)
                                .map_or("end of findings", |&g| section_marker(g))
                        )));
                    }
                    current = Some(i);
                    out[i].push(line);
                }
                (None, Some(c)) => out[c].push(line),
                (None, None) if t.is_empty() => {}
                (None, None) => return Err(fail(format!("text before first section: {line:?}"))),
            }
        }
        if current != Some(3) {
            return Err(fail("not all four sections present".into()));
        }
        Ok(RegionTexts(out.map(|lines| lines.join("\n").trim().to_string())))
    }
}

pub const REGION_SPLIT_PROMPT_VERSION: &str = "region-split-v1";
pub const REGION_SPLIT_PROMPT: &str = include_str!("../../assets/region_split_prompt.txt");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitReply {
    head_neck: String,
    chest: String,
    abdomen: String,
    pelvis_below: String,
}

/// Delegates the split to a chat model using the bundled prompt.
pub struct LlmSplitter<C> {
    pub client: C,
}

impl<C: ChatClient> Splitter for LlmSplitter<C> {
    fn split(&self, findings: &str) -> Result<RegionTexts, ReportError> {
        if findings.trim().is_empty() {
            return Ok(RegionTexts::default());
        }
        let prompt = REGION_SPLIT_PROMPT.replace("{report}", findings);
        let raw = self.client.complete(&prompt).map_err(|e| ReportError::Split {
            message: e.to_string(),
            raw: String::new(),
        })?;
        let body = raw
            .trim()
            .trim_start_matches("```json")
            .trim_start_matches("```")
            .trim_end_matches("```")
            .trim();
        let r: SplitReply = serde_json::from_str(body).map_err(|e| ReportError::Split {
            message: format!("malformed reply: {e}"),
            raw: raw.clone(),
        })?;
        Ok(RegionTexts([r.head_neck, r.chest, r.abdomen, r.pelvis_below]))
    }
}
