//! Closed pseudo-clinical English grammar for synthetic findings.
//!
//! Sentences:
//! - `{uptake} uptake lesion with {density} in {region}.`
//! - `{region} unremarkable.` / `no abnormal uptake or density in {region}.` /
//!   `{region} normal in appearance.`
//! - `{group} otherwise unremarkable.` marks every region of the group Normal.
//!
//! Findings are laid out as four lines, each opened by a section marker.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::labels::{normalize_label_matrix, RawFinding, RegionLabel, ReportLabels};
use crate::ontology::{regions_in_group, Density, RegionId, Uptake, REGIONS};
use crate::prep::BodyRegion;

pub const FEMALE_PELVIC_PHRASE: &str = "uterus and adnexa";
pub const MALE_PELVIC_PHRASE: &str = "prostate and seminal vesicles";

pub fn uptake_phrase(u: Uptake) -> &'static str {
    match u {
        Uptake::Intense => "intense",
        Uptake::Mild => "mild",
        Uptake::Physiological => "physiological",
        Uptake::Decreased => "decreased",
        Uptake::Normal => "normal",
    }
}

pub fn density_phrase(d: Density) -> &'static str {
    match d {
        Density::Lymphadenopathy => "lymphadenopathy",
        Density::FocalLesion => "focal lesion",
        Density::LungParenchymal => "parenchymal abnormality",
        Density::WallThickening => "wall thickening",
        Density::Calcification => "calcification",
        Density::BoneLesion => "bone lesion",
        Density::Other => "other abnormality",
        Density::Normal => "normal density",
    }
}

pub fn group_phrase(g: BodyRegion) -> &'static str {
    match g {
        BodyRegion::HeadNeck => "head and neck",
        BodyRegion::Chest => "chest",
        BodyRegion::Abdomen => "abdomen",
        BodyRegion::PelvisBelow => "pelvis and below",
    }
}

/// Line prefix opening a section of the findings text.
pub fn section_marker(g: BodyRegion) -> &'static str {
    match g {
        BodyRegion::HeadNeck => "HEAD AND NECK:",
        BodyRegion::Chest => "CHEST:",
        BodyRegion::Abdomen => "ABDOMEN:",
        BodyRegion::PelvisBelow => "PELVIS AND BELOW:",
    }
}

/// Ways of stating that a single region is normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalStyle {
    Unremarkable,
    NoAbnormal,
    NormalAppearance,
}

impl NormalStyle {
    pub const ALL: [NormalStyle; 3] = [
        NormalStyle::Unremarkable,
        NormalStyle::NoAbnormal,
        NormalStyle::NormalAppearance,
    ];
}

pub fn normal_sentence(style: NormalStyle, region_phrase: &str) -> String {
    match style {
        NormalStyle::Unremarkable => format!("{region_phrase} unremarkable."),
        NormalStyle::NoAbnormal => format!("no abnormal uptake or density in {region_phrase}."),
        NormalStyle::NormalAppearance => format!("{region_phrase} normal in appearance."),
    }
}

pub fn group_normal_sentence(g: BodyRegion) -> String {
    format!("{} otherwise unremarkable.", group_phrase(g))
}

pub fn finding_sentence(region: RegionId, label: RegionLabel) -> String {
    format!(
        "{} uptake lesion with {} in {}.",
        uptake_phrase(label.uptake),
        density_phrase(label.density),
        region.info().phrase
    )
}

fn region_lookup() -> &'static HashMap<&'static str, RegionId> {
    static MAP: OnceLock<HashMap<&'static str, RegionId>> = OnceLock::new();
    MAP.get_or_init(|| {
        let mut m: HashMap<&'static str, RegionId> = REGIONS
            .iter()
            .map(|r| (r.phrase, RegionId::new(r.id).unwrap()))
            .collect();
        let pelvic = RegionId::new(20).unwrap();
        m.insert(FEMALE_PELVIC_PHRASE, pelvic);
        m.insert(MALE_PELVIC_PHRASE, pelvic);
        m
    })
}

pub fn region_from_phrase(p: &str) -> Option<RegionId> {
    region_lookup().get(p).copied()
}

fn uptake_from_phrase(p: &str) -> Option<Uptake> {
    Uptake::ALL.into_iter().find(|&u| uptake_phrase(u) == p)
}

fn density_from_phrase(p: &str) -> Option<Density> {
    Density::ALL.into_iter().find(|&d| density_phrase(d) == p)
}

fn group_from_phrase(p: &str) -> Option<BodyRegion> {
    BodyRegion::ALL.into_iter().find(|&g| group_phrase(g) == p)
}

fn strip_marker(line: &str) -> &str {
    let t = line.trim_start();
    for g in BodyRegion::ALL {
        if let Some(rest) = t.strip_prefix(section_marker(g)) {
            return rest;
        }
    }
    t
}

/// Sentences of a findings text, lower-cased, without the final period and
/// with section markers removed.
pub fn sentences(text: &str) -> Vec<String> {
    text.lines()
        .map(strip_marker)
        .flat_map(|l| l.split('.'))
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Findings stated by one sentence, `None` if it is outside the grammar.
pub fn parse_sentence(s: &str) -> Option<Vec<RawFinding>> {
    let normal = |r: RegionId| {
        vec![RawFinding::new(r.get(), Uptake::Normal.id(), Density::Normal.id())]
    };
    if let Some(rest) = s.strip_prefix("no abnormal uptake or density in ") {
        return region_from_phrase(rest).map(normal);
    }
    if let Some(head) = s.strip_suffix(" otherwise unremarkable") {
        let g = group_from_phrase(head)?;
        return Some(regions_in_group(g).flat_map(normal).collect());
    }
    if let Some(head) = s.strip_suffix(" unremarkable") {
        return region_from_phrase(head).map(normal);
    }
    if let Some(head) = s.strip_suffix(" normal in appearance") {
        return region_from_phrase(head).map(normal);
    }
    let (u, rest) = s.split_once(" uptake lesion with ")?;
    let (d, r) = rest.split_once(" in ")?;
    let (u, d, r) = (uptake_from_phrase(u)?, density_from_phrase(d)?, region_from_phrase(r)?);
    Some(vec![RawFinding::new(r.get(), u.id(), d.id())])
}

/// Rule-based label extraction. Sentences outside the grammar are ignored.
pub fn extract_labels_rule(text: &str) -> ReportLabels {
    match extract(text) {
        Ok(l) | Err((l, _)) => l,
    }
}

/// Like [`extract_labels_rule`] but reports every unparsable sentence.
pub fn extract_labels_rule_strict(text: &str) -> Result<ReportLabels, Vec<String>> {
    extract(text).map_err(|(_, bad)| bad)
}

fn extract(text: &str) -> Result<ReportLabels, (ReportLabels, Vec<String>)> {
    let mut findings = Vec::new();
    let mut bad = Vec::new();
    for s in sentences(text) {
        match parse_sentence(&s) {
            Some(f) => findings.extend(f),
            None => bad.push(s),
        }
    }
    let labels = normalize_label_matrix(&findings).expect("grammar emits only valid ids");
    if bad.is_empty() {
        Ok(labels)
    } else {
        Err((labels, bad))
    }
}

/// Every word the grammar can emit, markers included, without punctuation.
pub fn grammar_words() -> Vec<&'static str> {
    let mut out = Vec::new();
    let mut push = |s: &'static str| out.extend(s.split_whitespace());
    for r in &REGIONS {
        push(r.phrase);
    }
    push(FEMALE_PELVIC_PHRASE);
    push(MALE_PELVIC_PHRASE);
    for u in Uptake::ALL {
        push(uptake_phrase(u));
    }
    for d in Density::ALL {
        push(density_phrase(d));
    }
    for g in BodyRegion::ALL {
        push(group_phrase(g));
        push(section_marker(g).trim_end_matches(':'));
    }
    push("uptake lesion with in unremarkable no abnormal or density normal appearance otherwise");
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spleen_example() {
        let l = extract_labels_rule("intense uptake lesion with lymphadenopathy in spleen.");
        let spleen = RegionId::new(13).unwrap();
        assert_eq!(l.get(spleen), RegionLabel::new(Uptake::Intense, Density::Lymphadenopathy));
        assert_eq!(l.abnormal().count(), 1);
    }

    #[test]
    fn every_finding_sentence_parses_back() {
        for r in RegionId::all() {
            for u in Uptake::ALL {
                for d in Density::ALL {
                    let s = finding_sentence(r, RegionLabel::new(u, d));
                    let got = parse_sentence(&sentences(&s)[0]).unwrap();
                    assert_eq!(got, vec![RawFinding::new(r.get(), u.id(), d.id())], "{s}");
                }
            }
        }
    }

    #[test]
    fn normal_statements() {
        for style in NormalStyle::ALL {
            let s = normal_sentence(style, "lungs and pleura");
            assert_eq!(parse_sentence(&sentences(&s)[0]), Some(vec![RawFinding::new(6, 5, 8)]));
        }
        let g = parse_sentence(&sentences(&group_normal_sentence(BodyRegion::Abdomen))[0]).unwrap();
        assert_eq!(g.len(), 9);
    }

    #[test]
    fn markers_and_aliases() {
        let s = sentences("PELVIS AND BELOW: uterus and adnexa unremarkable. spine unremarkable.\nCHEST:");
        assert_eq!(s, vec!["uterus and adnexa unremarkable", "spine unremarkable"]);
        assert_eq!(region_from_phrase(MALE_PELVIC_PHRASE).map(RegionId::get), Some(20));
    }

    #[test]
    fn strict_mode_lists_unknown_sentences() {
        let err = extract_labels_rule_strict("liver unremarkable. the moon is bright.").unwrap_err();
        assert_eq!(err, vec!["the moon is bright"]);
        let lenient = extract_labels_rule("liver unremarkable. the moon is bright.");
        assert_eq!(lenient, ReportLabels::all_normal());
    }

    #[test]
    fn words_cover_sentences() {
        let words = grammar_words();
        let s = finding_sentence(RegionId::new(7).unwrap(), RegionLabel::new(Uptake::Mild, Density::WallThickening));
        for w in s.trim_end_matches('.').split_whitespace() {
            assert!(words.contains(&w), "{w}");
        }
    }
}
