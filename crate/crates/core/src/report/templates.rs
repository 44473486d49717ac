use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::grammar::{
    group_normal_sentence, normal_sentence, section_marker, NormalStyle, FEMALE_PELVIC_PHRASE,
    MALE_PELVIC_PHRASE,
};
use crate::ontology::regions_in_group;
use crate::prep::{BodyRegion, Gender};

use super::ReportError;

/// On-disk form: one file per center holding both gender variants.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterTemplates {
    pub center_id: u8,
    pub male: String,
    pub female: String,
}

/// Healthy-example report text per `(center, gender)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TemplateDictionary {
    entries: BTreeMap<(u8, Gender), String>,
}

impl TemplateDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_center(&mut self, c: CenterTemplates) {
        self.entries.insert((c.center_id, Gender::Male), c.male);
        self.entries.insert((c.center_id, Gender::Female), c.female);
    }

    /// Exact stored text; no fallback to another center or gender.
    pub fn lookup(&self, center_id: u8, gender: Gender) -> Result<&str, ReportError> {
        self.entries
            .get(&(center_id, gender))
            .map(String::as_str)
            .ok_or(ReportError::UnknownCenter { center: center_id, gender })
    }

    pub fn centers(&self) -> Vec<u8> {
        let mut c: Vec<u8> = self.entries.keys().map(|(c, _)| *c).collect();
        c.dedup();
        c
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every listed center must have both genders registered.
    pub fn require_centers(&self, centers: &[u8]) -> Result<(), ReportError> {
        for &c in centers {
            for g in [Gender::Male, Gender::Female] {
                self.lookup(c, g)?;
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str, origin: &str) -> Result<CenterTemplates, ReportError> {
        toml::from_str(s).map_err(|e| ReportError::TemplateFile {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Loads every `*.toml` file in `dir`. A center defined twice is an error.
    pub fn load_dir(dir: &Path) -> Result<Self, ReportError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        let mut dict = TemplateDictionary::new();
        for p in paths {
            let origin = p.display().to_string();
            let c = Self::from_toml_str(&std::fs::read_to_string(&p)?, &origin)?;
            if dict.lookup(c.center_id, Gender::Male).is_ok() {
                return Err(ReportError::TemplateFile {
                    path: origin,
                    message: format!("center {} defined twice", c.center_id),
                });
            }
            dict.insert_center(c);
        }
        Ok(dict)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), ReportError> {
        std::fs::create_dir_all(dir)?;
        for c in self.centers() {
            let ct = CenterTemplates {
                center_id: c,
                male: self.lookup(c, Gender::Male)?.to_string(),
                female: self.lookup(c, Gender::Female)?.to_string(),
            };
            let text = toml::to_string(&ct).expect("plain strings serialize");
            std::fs::write(dir.join(format!("center_{c}.toml")), text)?;
        }
        Ok(())
    }

    /// Synthetic stand-in templates for centers 1..=5. These are test
    /// fixtures written in the phantom grammar, not real hospital text.
    pub fn fixtures() -> Self {
        let mut d = TemplateDictionary::new();
        for c in 1..=5u8 {
            d.insert_center(CenterTemplates {
                center_id: c,
                male: fixture_template(c, Gender::Male),
                female: fixture_template(c, Gender::Female),
            });
        }
        d
    }
}

/// Fixture template for one center and gender. Centers differ in the normal
/// phrasing they prefer and in which regions they mention explicitly.
pub fn fixture_template(center_id: u8, gender: Gender) -> String {
    let style = NormalStyle::ALL[(center_id as usize + 2) % 3];
    let stride = 2 + center_id as usize % 3;
    let mut lines = Vec::new();
    for g in BodyRegion::ALL {
        let mut sentences = Vec::new();
        for r in regions_in_group(g) {
            let phrase = if r.get() == 20 {
                match gender {
                    Gender::Male => MALE_PELVIC_PHRASE,
                    Gender::Female => FEMALE_PELVIC_PHRASE,
                }
            } else if (r.get() as usize + center_id as usize) % stride == 0 {
                r.info().phrase
            } else {
                continue;
            };
            sentences.push(normal_sentence(style, phrase));
        }
        sentences.push(group_normal_sentence(g));
        lines.push(format!("{} {}", section_marker(g), sentences.join(" ")));
    }
    lines.join("\n")
}
