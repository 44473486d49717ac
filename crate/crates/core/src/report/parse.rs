use serde::{Deserialize, Serialize};

use crate::prep::Gender;

use super::ReportError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub gender: Option<Gender>,
    pub clinical_history: String,
    pub findings: String,
    pub impression: String,
    pub center_id: Option<u8>,
    pub language_tag: String,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Field {
    Gender,
    History,
    Findings,
    Impression,
    Center,
    Language,
}

const LABELS: &[(&str, Field)] = &[
    ("Gender:", Field::Gender),
    ("Clinical History:", Field::History),
    ("Findings:", Field::Findings),
    ("Impression:", Field::Impression),
    ("Center:", Field::Center),
    ("Language:", Field::Language),
];

fn label_of(line: &str) -> Option<(Field, &str)> {
    LABELS
        .iter()
        .find_map(|&(l, f)| line.strip_prefix(l).map(|rest| (f, rest)))
}

/// Parses a document made of labeled sections. A label must start a line;
/// the section runs until the next label. Findings is required.
pub fn parse_report_fields(raw: &str) -> Result<ReportRecord, ReportError> {
    let mut sections: Vec<(Field, Vec<&str>)> = Vec::new();
    for line in raw.lines() {
        match label_of(line) {
            Some((f, rest)) => {
                if sections.iter().any(|(g, _)| *g == f) {
                    return Err(ReportError::Parse(format!("duplicate section {f:?}")));
                }
                sections.push((f, vec![rest]));
            }
            None => match sections.last_mut() {
                Some((_, lines)) => lines.push(line),
                None if line.trim().is_empty() => {}
                None => {
                    return Err(ReportError::Parse(format!(
                        "text before the first section label: {line:?}"
                    )))
                }
            },
        }
    }
    let take = |f: Field| -> Option<String> {
        sections
            .iter()
            .find(|(g, _)| *g == f)
            .map(|(_, lines)| lines.join("\n").trim().to_string())
    };
    let findings = take(Field::Findings)
        .ok_or_else(|| ReportError::Parse("missing Findings section".into()))?;
    let gender = match take(Field::Gender) {
        None => None,
        Some(g) if g.is_empty() => None,
        Some(g) => Some(
            Gender::parse(&g).ok_or_else(|| ReportError::Parse(format!("unknown gender {g:?}")))?,
        ),
    };
    let center_id = match take(Field::Center) {
        None => None,
        Some(c) if c.is_empty() => None,
        Some(c) => Some(
            c.parse::<u8>()
                .map_err(|_| ReportError::Parse(format!("bad center id {c:?}")))?,
        ),
    };
    Ok(ReportRecord {
        gender,
        clinical_history: take(Field::History).unwrap_or_default(),
        findings,
        impression: take(Field::Impression).unwrap_or_default(),
        center_id,
        language_tag: take(Field::Language).unwrap_or_else(|| "en".into()),
    })
}

impl ReportRecord {
    /// Inverse of [`parse_report_fields`] for records whose fields contain no
    /// section labels at line starts.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        if let Some(c) = self.center_id {
            out.push_str(&format!("Center: {c}\n"));
        }
        out.push_str(&format!("Language: {}\n", self.language_tag));
        if let Some(g) = self.gender {
            out.push_str(&format!("Gender: {}\n", g.as_str()));
        }
        out.push_str(&format!("Clinical History: {}\n", self.clinical_history));
        out.push_str(&format!("Findings:\n{}\n", self.findings));
        out.push_str(&format!("Impression: {}\n", self.impression));
        out
    }
}
