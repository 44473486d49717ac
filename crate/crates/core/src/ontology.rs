//! 24-region anatomical ontology with uptake and density status vocabularies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prep::BodyRegion;

pub const NUM_REGIONS: usize = 24;
pub const NUM_UPTAKE: usize = 5;
pub const NUM_DENSITY: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OntologyError {
    #[error("region id {0} outside 1..=24")]
    Region(u8),
    #[error("uptake class {0} outside 1..=5")]
    Uptake(u8),
    #[error("density class {0} outside 1..=8")]
    Density(u8),
}

/// 1-based anatomical region id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RegionId(u8);

impl RegionId {
    pub fn new(id: u8) -> Result<Self, OntologyError> {
        if (1..=NUM_REGIONS as u8).contains(&id) {
            Ok(RegionId(id))
        } else {
            Err(OntologyError::Region(id))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// 0-based position in [`REGIONS`].
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> RegionId {
        assert!(i < NUM_REGIONS, "region index {i} out of range");
        RegionId(i as u8 + 1)
    }

    pub fn all() -> impl Iterator<Item = RegionId> {
        (1..=NUM_REGIONS as u8).map(RegionId)
    }

    pub fn info(self) -> &'static RegionInfo {
        &REGIONS[self.index()]
    }
}

impl TryFrom<u8> for RegionId {
    type Error = OntologyError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        RegionId::new(v)
    }
}

impl From<RegionId> for u8 {
    fn from(r: RegionId) -> u8 {
        r.0
    }
}

/// PET uptake status; discriminants are the ontology ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum Uptake {
    Intense = 1,
    Mild = 2,
    Physiological = 3,
    Decreased = 4,
    Normal = 5,
}

impl Uptake {
    pub const ALL: [Uptake; NUM_UPTAKE] = [
        Uptake::Intense,
        Uptake::Mild,
        Uptake::Physiological,
        Uptake::Decreased,
        Uptake::Normal,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self, OntologyError> {
        Uptake::ALL
            .get((id as usize).wrapping_sub(1))
            .copied()
            .ok_or(OntologyError::Uptake(id))
    }

    pub fn label(self) -> &'static str {
        match self {
            Uptake::Intense => "Intense Abnormal Uptake",
            Uptake::Mild => "Mild/Suspicious Abnormal Uptake",
            Uptake::Physiological => "Physiological/Background Uptake",
            Uptake::Decreased => "Uptake Defect / Decreased Uptake",
            Uptake::Normal => "Normal",
        }
    }

    /// Rank used when several findings compete for one region; higher wins.
    /// Order: intense > mild > decreased > physiological > normal.
    pub fn severity(self) -> u8 {
        match self {
            Uptake::Intense => 4,
            Uptake::Mild => 3,
            Uptake::Decreased => 2,
            Uptake::Physiological => 1,
            Uptake::Normal => 0,
        }
    }
}

impl TryFrom<u8> for Uptake {
    type Error = OntologyError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Uptake::from_id(v)
    }
}

impl From<Uptake> for u8 {
    fn from(u: Uptake) -> u8 {
        u.id()
    }
}

/// CT density status; discriminants are the ontology ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum Density {
    Lymphadenopathy = 1,
    FocalLesion = 2,
    LungParenchymal = 3,
    WallThickening = 4,
    Calcification = 5,
    BoneLesion = 6,
    Other = 7,
    Normal = 8,
}

impl Density {
    pub const ALL: [Density; NUM_DENSITY] = [
        Density::Lymphadenopathy,
        Density::FocalLesion,
        Density::LungParenchymal,
        Density::WallThickening,
        Density::Calcification,
        Density::BoneLesion,
        Density::Other,
        Density::Normal,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self, OntologyError> {
        Density::ALL
            .get((id as usize).wrapping_sub(1))
            .copied()
            .ok_or(OntologyError::Density(id))
    }

    pub fn label(self) -> &'static str {
        match self {
            Density::Lymphadenopathy => "Lymphadenopathy",
            Density::FocalLesion => "Focal Lesion",
            Density::LungParenchymal => "Lung Parenchymal Abnormality",
            Density::WallThickening => "Wall/Membrane Thickening",
            Density::Calcification => "Calcification",
            Density::BoneLesion => "Bone/Skeletal Lesion",
            Density::Other => "Other Abnormality",
            Density::Normal => "Normal",
        }
    }

    /// Abnormal classes outrank Normal; among abnormal ones the lower id wins.
    pub fn severity(self) -> u8 {
        NUM_DENSITY as u8 - self.id()
    }
}

impl TryFrom<u8> for Density {
    type Error = OntologyError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Density::from_id(v)
    }
}

impl From<Density> for u8 {
    fn from(d: Density) -> u8 {
        d.id()
    }
}

/// Which label channel a class id refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Pet,
    Ct,
}

impl Channel {
    pub fn num_classes(self) -> usize {
        match self {
            Channel::Pet => NUM_UPTAKE,
            Channel::Ct => NUM_DENSITY,
        }
    }

    pub fn normal_id(self) -> u8 {
        self.num_classes() as u8
    }

    pub fn class_label(self, id: u8) -> Result<&'static str, OntologyError> {
        match self {
            Channel::Pet => Uptake::from_id(id).map(Uptake::label),
            Channel::Ct => Density::from_id(id).map(Density::label),
        }
    }
}

#[derive(Debug)]
pub struct RegionInfo {
    pub id: u8,
    pub label: &'static str,
    /// Lower-case ASCII phrase used by the synthetic report grammar.
    pub phrase: &'static str,
    pub group: BodyRegion,
}

macro_rules! region {
    ($id:expr, $label:expr, $phrase:expr, $group:ident) => {
        RegionInfo { id: $id, label: $label, phrase: $phrase, group: BodyRegion::$group }
    };
}

pub static REGIONS: [RegionInfo; NUM_REGIONS] = [
    region!(1, "Brain, Skull, and Meninges", "brain skull and meninges", HeadNeck),
    region!(2, "Orbit, Nasal Cavity, and Paranasal Sinuses", "orbit nasal cavity and paranasal sinuses", HeadNeck),
    region!(3, "Pharyngeal Spaces, Tonsils, and Larynx", "pharyngeal spaces tonsils and larynx", HeadNeck),
    region!(4, "Thyroid Gland and Major Salivary Glands", "thyroid and major salivary glands", HeadNeck),
    region!(5, "Cervical Lymph Nodes", "cervical lymph nodes", HeadNeck),
    region!(6, "Lungs and Pleura", "lungs and pleura", Chest),
    region!(7, "Mediastinum and Hila", "mediastinum and hila", Chest),
    region!(8, "Heart and Pericardium", "heart and pericardium", Chest),
    region!(9, "Axilla and Chest Wall", "axilla and chest wall", Chest),
    region!(10, "Breasts", "breasts", Chest),
    region!(11, "Liver", "liver", Abdomen),
    region!(12, "Gallbladder and Biliary Tract", "gallbladder and biliary tract", Abdomen),
    region!(13, "Spleen", "spleen", Abdomen),
    region!(14, "Pancreas", "pancreas", Abdomen),
    region!(15, "Kidneys", "kidneys", Abdomen),
    region!(16, "Adrenal Glands", "adrenal glands", Abdomen),
    region!(17, "Gastrointestinal Tract", "gastrointestinal tract", Abdomen),
    region!(18, "Retroperitoneal Space", "retroperitoneal space", Abdomen),
    region!(19, "Peritoneum, Mesentery, and Omentum", "peritoneum mesentery and omentum", Abdomen),
    region!(20, "Pelvic Organs", "pelvic organs", PelvisBelow),
    region!(21, "Pelvic and Inguinal Lymph Nodes", "pelvic and inguinal lymph nodes", PelvisBelow),
    region!(22, "Spine", "spine", PelvisBelow),
    region!(23, "Pelvis and Bones of Extremities", "pelvis and extremity bones", PelvisBelow),
    region!(24, "Muscles and Subcutaneous Tissue", "muscles and subcutaneous tissue", PelvisBelow),
];

/// Regions belonging to one coarse report section.
pub fn regions_in_group(group: BodyRegion) -> impl Iterator<Item = RegionId> {
    RegionId::all().filter(move |r| r.info().group == group)
}
