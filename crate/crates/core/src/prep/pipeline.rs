use serde::{Deserialize, Serialize};

use crate::config::PrepConfig;
use crate::exec::Execution;
use crate::volume::VolumeGrid;

use super::crop::{crop_body_and_thigh, CropRecord};
use super::hu::convert_and_clip_hu;
use super::providers::{LandmarkProvider, MaskProvider};
use super::regions::{crop_z, region_ranges, RegionRange};
use super::resample::resample_pair;
use super::suv::compute_suv;
use super::{PrepError, ScanMetadata};

#[derive(Clone, Copy, Debug)]
pub struct PrepOptions {
    pub decay_correct: bool,
    pub regions: bool,
    /// Used inside a single scan (resampling slabs).
    pub exec: Execution,
}

impl Default for PrepOptions {
    fn default() -> Self {
        PrepOptions {
            decay_correct: false,
            regions: false,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PreparedRegion {
    pub range: RegionRange,
    pub ct: VolumeGrid,
    pub pet: VolumeGrid,
}

#[derive(Clone, Debug)]
pub struct PreparedCase {
    pub ct: VolumeGrid,
    pub pet: VolumeGrid,
    pub crop: CropRecord,
    pub regions: Vec<PreparedRegion>,
}

/// Sidecar written next to prepared volumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepSidecar {
    pub crop: CropRecord,
    pub spacing_mm: [f64; 3],
    pub regions: Vec<RegionRange>,
    pub decay_correct: bool,
}

impl PreparedCase {
    pub fn sidecar(&self, decay_correct: bool) -> PrepSidecar {
        PrepSidecar {
            crop: self.crop.clone(),
            spacing_mm: self.ct.spacing_mm,
            regions: self.regions.iter().map(|r| r.range).collect(),
            decay_correct,
        }
    }
}

pub struct Providers<'a> {
    pub mask: &'a dyn MaskProvider,
    pub landmarks: &'a dyn LandmarkProvider,
}

/// SUV + HU normalization, RAS resampling, body/thigh crop and (optionally)
/// regional decomposition for one scan.
pub fn prepare_case(
    ct_raw: &VolumeGrid,
    pet_raw: &VolumeGrid,
    meta: &ScanMetadata,
    cfg: &PrepConfig,
    opts: PrepOptions,
    providers: &Providers<'_>,
) -> Result<PreparedCase, PrepError> {
    let suv = compute_suv(pet_raw, meta, opts.decay_correct, cfg)?;
    let ct_norm = convert_and_clip_hu(ct_raw, meta, cfg)?;
    let (ct, pet) = resample_pair(&ct_norm, &suv, cfg, opts.exec)?;
    let (ct, pet, crop) = crop_body_and_thigh(&ct, &pet, providers.mask, cfg)?;
    let regions = if opts.regions {
        let ranges = region_ranges(
            providers.landmarks.landmarks(&ct)?,
            ct.shape()[2],
            cfg.region_buffer_slices,
        )?;
        ranges
            .into_iter()
            .map(|range| PreparedRegion {
                range,
                ct: crop_z(&ct, range.z),
                pet: crop_z(&pet, range.z),
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(PreparedCase { ct, pet, crop, regions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prep::providers::{FractionalLandmarks, ThresholdMaskProvider};
    use crate::prep::Gender;
    use crate::volume::Modality;
    use chrono::NaiveDate;

    fn meta() -> ScanMetadata {
        let t0 = NaiveDate::from_ymd_opt(2021, 3, 4).unwrap().and_hms_opt(9, 0, 0).unwrap();
        ScanMetadata {
            body_weight_g: 70_000.0,
            injected_dose_bq: 3.5e8,
            injection_time: t0,
            acquisition_time: t0 + chrono::Duration::minutes(60),
            rescale_slope: 1.0,
            rescale_intercept: -1024.0,
            center_id: 1,
            gender: Gender::Female,
            patient_id: None,
        }
    }

    #[test]
    fn end_to_end_single_scan() {
        let shape = [20, 20, 40];
        let mut ct = VolumeGrid::filled(shape, 0.0, [3.0, 3.0, 6.0], Modality::CtRaw);
        let mut pet = VolumeGrid::filled(shape, 0.0, [3.0, 3.0, 6.0], Modality::PetRaw);
        for x in 5..15 {
            for y in 5..15 {
                for z in 4..36 {
                    ct.values[[x, y, z]] = 1064.0;
                    pet.values[[x, y, z]] = 5000.0;
                }
            }
        }
        let opts = PrepOptions { regions: true, ..Default::default() };
        let providers = Providers {
            mask: &ThresholdMaskProvider::default(),
            landmarks: &FractionalLandmarks::default(),
        };
        let case = prepare_case(&ct, &pet, &meta(), &PrepConfig::default(), opts, &providers).unwrap();
        assert_eq!(case.ct.shape(), case.pet.shape());
        assert_eq!(case.ct.spacing_mm, [1.5, 1.5, 3.0]);
        assert_eq!(case.crop.original_shape, [40, 40, 80]);
        assert_eq!(case.regions.len(), 4);
        assert!(case.ct.validate().is_ok());
        assert!((case.pet.max_value() - 1.0).abs() < 1e-9);
    }
}
