//! Seeded PET/CT phantoms with ground-truth region labels and rendered
//! findings text.

use std::collections::HashMap;

use chrono::{Duration, NaiveDate};
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SynthConfig;
use crate::grammar::{finding_sentence, section_marker};
use crate::labels::{RegionLabel, ReportLabels};
use crate::ontology::{Density, RegionId, Uptake, NUM_REGIONS};
use crate::prep::{BodyRegion, Gender, ScanMetadata};
use crate::report::{ReportError, ReportRecord, TemplateDictionary};
use crate::volume::{Modality, VolumeGrid};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid phantom spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Template(#[from] ReportError),
}

/// Fractional anchor of each region inside the body ellipsoid, as offsets
/// from the ellipsoid centre in units of its semi-axes (x, y, z; z superior).
/// Table version 1.
pub const REGION_ANCHORS_VERSION: u32 = 1;
pub const REGION_ANCHORS: [[f64; 3]; NUM_REGIONS] = [
    [0.0, 0.0, 0.68],
    [0.0, 0.34, 0.595],
    [0.0, 0.17, 0.493],
    [0.0, 0.297, 0.408],
    [0.297, 0.0, 0.442],
    [-0.297, 0.0, 0.255],
    [0.0, 0.0, 0.255],
    [0.085, 0.297, 0.153],
    [0.425, 0.0, 0.153],
    [-0.255, 0.383, 0.085],
    [-0.34, 0.0, -0.017],
    [-0.212, 0.255, -0.085],
    [0.383, -0.128, -0.017],
    [0.085, 0.085, -0.102],
    [0.255, -0.297, -0.17],
    [-0.128, -0.297, -0.068],
    [0.043, 0.34, -0.238],
    [-0.043, -0.17, -0.255],
    [-0.297, 0.255, -0.34],
    [0.0, 0.212, -0.468],
    [0.34, 0.128, -0.51],
    [0.0, -0.425, -0.128],
    [-0.34, -0.17, -0.527],
    [0.425, -0.255, -0.383],
];

const BODY_SEMI_AXIS_FRACTION: f64 = 0.42;
const SOFT_TISSUE_HU: f64 = 40.0;
const AIR_HU: f64 = -1000.0;
const BACKGROUND_SUV: f64 = 1.0;
const RESCALE_INTERCEPT: f64 = -1024.0;

fn lesion_suv(u: Uptake) -> Option<f64> {
    match u {
        Uptake::Intense => Some(12.0),
        Uptake::Mild => Some(4.0),
        Uptake::Physiological => Some(2.5),
        Uptake::Decreased => Some(0.2),
        Uptake::Normal => None,
    }
}

fn lesion_hu(d: Density) -> Option<f64> {
    match d {
        Density::Lymphadenopathy => Some(55.0),
        Density::FocalLesion => Some(90.0),
        Density::LungParenchymal => Some(-300.0),
        Density::WallThickening => Some(120.0),
        Density::Calcification => Some(400.0),
        Density::BoneLesion => Some(700.0),
        Density::Other => Some(-80.0),
        Density::Normal => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    pub region: RegionId,
    pub uptake: Uptake,
    pub density: Density,
    /// Voxel coordinates.
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    pub volume_shape: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub lesions: Vec<Lesion>,
    pub center_id: u8,
    pub gender: Gender,
}

/// Ellipsoid centre and semi-axes in voxels.
pub fn body_ellipsoid(shape: [usize; 3]) -> ([f64; 3], [f64; 3]) {
    let c = shape.map(|n| n as f64 / 2.0 - 0.5);
    let a = shape.map(|n| n as f64 * BODY_SEMI_AXIS_FRACTION);
    (c, a)
}

fn normalized_radius(p: [f64; 3], c: [f64; 3], a: [f64; 3]) -> f64 {
    (0..3).map(|i| ((p[i] - c[i]) / a[i]).powi(2)).sum::<f64>().sqrt()
}

pub fn anchor_voxel(region: RegionId, shape: [usize; 3]) -> [f64; 3] {
    let (c, a) = body_ellipsoid(shape);
    let f = REGION_ANCHORS[region.index()];
    [c[0] + f[0] * a[0], c[1] + f[1] * a[1], c[2] + f[2] * a[2]]
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let (c, a) = body_ellipsoid(self.volume_shape);
        let a_min = a.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut by_region: HashMap<RegionId, (Uptake, Density)> = HashMap::new();
        for l in &self.lesions {
            if l.uptake == Uptake::Normal || l.density == Density::Normal {
                return Err(SynthError::Spec(format!(
                    "lesion in region {} uses a Normal class",
                    l.region.get()
                )));
            }
            if !(l.radius > 0.0) {
                return Err(SynthError::Spec("lesion radius must be positive".into()));
            }
            if normalized_radius(l.center, c, a) + l.radius / a_min > 1.0 {
                return Err(SynthError::Spec(format!(
                    "lesion in region {} does not fit inside the body",
                    l.region.get()
                )));
            }
            if let Some(&prev) = by_region.get(&l.region) {
                if prev != (l.uptake, l.density) {
                    return Err(SynthError::Spec(format!(
                        "conflicting lesion classes in region {}",
                        l.region.get()
                    )));
                }
            }
            by_region.insert(l.region, (l.uptake, l.density));
        }
        if !(1..=5).contains(&self.center_id) {
            return Err(SynthError::Spec(format!("center {} outside 1..=5", self.center_id)));
        }
        Ok(())
    }

    pub fn labels(&self) -> ReportLabels {
        let mut out = ReportLabels::all_normal();
        for l in &self.lesions {
            out.set(l.region, RegionLabel::new(l.uptake, l.density));
        }
        out
    }

    /// Draws a valid random spec from `seed`.
    pub fn random(seed: u64, cfg: &SynthConfig) -> PhantomSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = cfg.volume_shape;
        let (_, a) = body_ellipsoid(shape);
        let a_min = a.iter().cloned().fold(f64::INFINITY, f64::min);
        let n = rng.gen_range(0..=cfg.max_lesions.min(NUM_REGIONS));
        let mut regions: Vec<RegionId> = RegionId::all().collect();
        regions.shuffle(&mut rng);
        let lesions = regions[..n]
            .iter()
            .map(|&region| {
                let anchor = anchor_voxel(region, shape);
                let jitter = [0, 1, 2].map(|i| rng.gen_range(-0.05..0.05) * a[i]);
                Lesion {
                    region,
                    uptake: Uptake::ALL[rng.gen_range(0..4)],
                    density: Density::ALL[rng.gen_range(0..7)],
                    center: [0, 1, 2].map(|i| anchor[i] + jitter[i]),
                    radius: a_min * rng.gen_range(0.12..0.2),
                }
            })
            .collect();
        PhantomSpec {
            seed,
            volume_shape: shape,
            spacing_mm: cfg.spacing_mm,
            lesions,
            center_id: *cfg.centers.choose(&mut rng).expect("validated non-empty"),
            gender: if rng.gen_bool(0.5) { Gender::Male } else { Gender::Female },
        }
    }
}

/// One synthetic examination.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRecord {
    pub case_id: String,
    pub ct_raw: VolumeGrid,
    pub pet_raw: VolumeGrid,
    pub meta: ScanMetadata,
    pub report: ReportRecord,
}

/// Appends one grammar sentence per abnormal region to the section of the
/// template that covers it. All-normal labels return the template unchanged.
pub fn render_findings(labels: &ReportLabels, template: &str) -> String {
    let mut lines: Vec<String> = template.lines().map(str::to_string).collect();
    for g in BodyRegion::ALL {
        let added: Vec<String> = labels
            .abnormal()
            .filter(|(r, _)| r.info().group == g)
            .map(|(r, l)| finding_sentence(r, l))
            .collect();
        if added.is_empty() {
            continue;
        }
        let marker = section_marker(g);
        match lines.iter_mut().find(|l| l.trim_start().starts_with(marker)) {
            Some(line) => {
                for s in added {
                    line.push(' ');
                    line.push_str(&s);
                }
            }
            None => lines.push(format!("{marker} {}", added.join(" "))),
        }
    }
    lines.join("\n")
}

fn impression(labels: &ReportLabels) -> String {
    let n = labels.abnormal().count();
    match n {
        0 => "no abnormal findings".to_string(),
        1 => "one abnormal region".to_string(),
        _ => format!("{n} abnormal regions"),
    }
}

/// Renders volumes, metadata and findings for `spec`. Deterministic in the seed.
pub fn generate_case(
    spec: &PhantomSpec,
    templates: &TemplateDictionary,
) -> Result<(ScanRecord, ReportLabels), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0f_ca5e);
    let shape = spec.volume_shape;
    let (c, a) = body_ellipsoid(shape);

    let body_weight_g = rng.gen_range(50_000.0..100_000.0f64).round();
    let injected_dose_bq = (rng.gen_range(2.0e8..4.0e8f64) / 1e5).round() * 1e5;
    let day = rng.gen_range(0..730);
    let injection_time = NaiveDate::from_ymd_opt(2020, 1, 1)
        .unwrap()
        .and_hms_opt(9, 0, 0)
        .unwrap()
        + Duration::days(day);
    let acquisition_time = injection_time + Duration::minutes(rng.gen_range(50..=70));
    let patient = rng.gen_range(0..1_000_000u32);

    let mut hu = Array3::from_elem((shape[0], shape[1], shape[2]), AIR_HU);
    let mut suv = Array3::zeros((shape[0], shape[1], shape[2]));
    for ((x, y, z), h) in hu.indexed_iter_mut() {
        let p = [x as f64, y as f64, z as f64];
        if normalized_radius(p, c, a) <= 1.0 {
            *h = SOFT_TISSUE_HU + rng.gen_range(-10.0..10.0);
            suv[[x, y, z]] = BACKGROUND_SUV * rng.gen_range(0.95..1.05);
        }
    }
    for l in &spec.lesions {
        let r2 = l.radius * l.radius;
        for ((x, y, z), h) in hu.indexed_iter_mut() {
            let d2 = (x as f64 - l.center[0]).powi(2)
                + (y as f64 - l.center[1]).powi(2)
                + (z as f64 - l.center[2]).powi(2);
            if d2 <= r2 {
                if let Some(v) = lesion_hu(l.density) {
                    *h = v;
                }
                if let Some(v) = lesion_suv(l.uptake) {
                    suv[[x, y, z]] = v;
                }
            }
        }
    }

    let ct_raw = hu.mapv(|h| h - RESCALE_INTERCEPT);
    let pet_raw = suv.mapv(|s| s * injected_dose_bq / body_weight_g);
    let grid = |values, modality| VolumeGrid {
        values,
        spacing_mm: spec.spacing_mm,
        orientation: crate::volume::Orientation::RAS,
        modality,
    };

    let labels = spec.labels();
    let template = templates.lookup(spec.center_id, spec.gender)?;
    let report = ReportRecord {
        gender: Some(spec.gender),
        clinical_history: "lymphoma staging".to_string(),
        findings: render_findings(&labels, template),
        impression: impression(&labels),
        center_id: Some(spec.center_id),
        language_tag: "en".to_string(),
    };
    let meta = ScanMetadata {
        body_weight_g,
        injected_dose_bq,
        injection_time,
        acquisition_time,
        rescale_slope: 1.0,
        rescale_intercept: RESCALE_INTERCEPT,
        center_id: spec.center_id,
        gender: spec.gender,
        patient_id: Some(format!("P{patient:06}")),
    };
    let record = ScanRecord {
        case_id: format!("case_{:016x}", spec.seed),
        ct_raw: grid(ct_raw, Modality::CtRaw),
        pet_raw: grid(pet_raw, Modality::PetRaw),
        meta,
        report,
    };
    Ok((record, labels))
}
