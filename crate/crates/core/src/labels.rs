//! Per-report region labels and the normalization rules that build them.

use serde::{Deserialize, Serialize};

use crate::ontology::{Channel, Density, OntologyError, RegionId, Uptake, NUM_REGIONS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionLabel {
    pub uptake: Uptake,
    pub density: Density,
}

impl RegionLabel {
    pub const NORMAL: RegionLabel = RegionLabel {
        uptake: Uptake::Normal,
        density: Density::Normal,
    };

    pub fn new(uptake: Uptake, density: Density) -> Self {
        RegionLabel { uptake, density }
    }

    pub fn is_normal(self) -> bool {
        self == RegionLabel::NORMAL
    }

    pub fn class_id(self, channel: Channel) -> u8 {
        match channel {
            Channel::Pet => self.uptake.id(),
            Channel::Ct => self.density.id(),
        }
    }
}

impl Default for RegionLabel {
    fn default() -> Self {
        RegionLabel::NORMAL
    }
}

/// The 24 region labels of one report.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReportLabels(pub [RegionLabel; NUM_REGIONS]);

impl Default for ReportLabels {
    fn default() -> Self {
        ReportLabels([RegionLabel::NORMAL; NUM_REGIONS])
    }
}

impl ReportLabels {
    pub fn all_normal() -> Self {
        Self::default()
    }

    pub fn get(&self, r: RegionId) -> RegionLabel {
        self.0[r.index()]
    }

    pub fn set(&mut self, r: RegionId, label: RegionLabel) {
        self.0[r.index()] = label;
    }

    pub fn abnormal(&self) -> impl Iterator<Item = (RegionId, RegionLabel)> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_normal())
            .map(|(i, &l)| (RegionId::from_index(i), l))
    }
}

/// Labels for a corpus of N reports.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    pub reports: Vec<ReportLabels>,
}

impl LabelMatrix {
    pub fn new(reports: Vec<ReportLabels>) -> Self {
        LabelMatrix { reports }
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn all_normal(n: usize) -> Self {
        LabelMatrix::new(vec![ReportLabels::all_normal(); n])
    }
}

/// One unvalidated `(region, uptake, density)` finding as produced by an extractor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawFinding {
    pub region: u8,
    pub uptake: u8,
    pub density: u8,
}

impl RawFinding {
    pub fn new(region: u8, uptake: u8, density: u8) -> Self {
        RawFinding { region, uptake, density }
    }
}

/// Folds findings into a full row set. Regions without findings stay Normal;
/// when several findings hit one region each channel keeps its most
/// significant class independently.
pub fn normalize_label_matrix(findings: &[RawFinding]) -> Result<ReportLabels, OntologyError> {
    let mut out = ReportLabels::all_normal();
    for f in findings {
        let region = RegionId::new(f.region)?;
        let uptake = Uptake::from_id(f.uptake)?;
        let density = Density::from_id(f.density)?;
        let cur = &mut out.0[region.index()];
        if uptake.severity() > cur.uptake.severity() {
            cur.uptake = uptake;
        }
        if density.severity() > cur.density.severity() {
            cur.density = density;
        }
    }
    Ok(out)
}
