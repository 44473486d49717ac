use crate::config::PrepConfig;
use crate::volume::{Modality, VolumeGrid};

use super::{PrepError, ScanMetadata};

/// Activity remaining from `dose_bq` after `elapsed_s` seconds of decay.
pub fn decayed_dose(dose_bq: f64, elapsed_s: f64, half_life_s: f64) -> f64 {
    dose_bq * 0.5f64.powf(elapsed_s / half_life_s)
}

/// Converts activity concentration (Bq/mL) to body-weight SUV.
///
/// `SUV = c · BW / ID`. With `decay_correct` set, the injected dose is decayed
/// from injection to acquisition start before the division; otherwise the
/// image values are assumed to be corrected to the injection time already.
pub fn compute_suv(
    pet_raw: &VolumeGrid,
    meta: &ScanMetadata,
    decay_correct: bool,
    cfg: &PrepConfig,
) -> Result<VolumeGrid, PrepError> {
    if pet_raw.modality != Modality::PetRaw {
        return Err(PrepError::WrongModality {
            expected: Modality::PetRaw,
            found: pet_raw.modality,
        });
    }
    meta.validate()?;
    let dose = if decay_correct {
        decayed_dose(meta.injected_dose_bq, meta.uptake_seconds(), cfg.f18_half_life_s)
    } else {
        meta.injected_dose_bq
    };
    let bw = meta.body_weight_g;
    let values = pet_raw.values.mapv(|c| c * bw / dose);
    Ok(pet_raw.with_values(values, Modality::PetSuv))
}
