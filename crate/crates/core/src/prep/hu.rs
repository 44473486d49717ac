use crate::config::PrepConfig;
use crate::volume::{Modality, VolumeGrid};

use super::{PrepError, ScanMetadata};

/// Stored value → clipped HU → `[0, 1]`.
pub fn normalize_hu_value(raw: f64, slope: f64, intercept: f64, clip: [f64; 2]) -> f64 {
    let hu = (slope * raw + intercept).clamp(clip[0], clip[1]);
    (hu - clip[0]) / (clip[1] - clip[0])
}

/// Inverse of the `[0, 1]` mapping, for values already inside the window.
pub fn denormalize_hu(norm: f64, clip: [f64; 2]) -> f64 {
    clip[0] + norm * (clip[1] - clip[0])
}

/// Applies the rescale slope/intercept, clips to the HU window and maps the
/// window linearly onto `[0, 1]`. The order convert → clip → normalize is fixed.
pub fn convert_and_clip_hu(
    ct_raw: &VolumeGrid,
    meta: &ScanMetadata,
    cfg: &PrepConfig,
) -> Result<VolumeGrid, PrepError> {
    if ct_raw.modality != Modality::CtRaw {
        return Err(PrepError::WrongModality {
            expected: Modality::CtRaw,
            found: ct_raw.modality,
        });
    }
    let (slope, intercept, clip) = (meta.rescale_slope, meta.rescale_intercept, cfg.hu_clip);
    let values = ct_raw
        .values
        .mapv(|raw| normalize_hu_value(raw, slope, intercept, clip));
    Ok(ct_raw.with_values(values, Modality::CtNorm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CLIP: [f64; 2] = [-1000.0, 1000.0];

    #[test]
    fn fixed_points() {
        assert_eq!(normalize_hu_value(0.0, 1.0, 0.0, CLIP), 0.5);
        assert_eq!(normalize_hu_value(2000.0, 1.0, -1024.0, CLIP), 0.988);
        assert_eq!(normalize_hu_value(4024.0, 1.0, -1024.0, CLIP), 1.0);
        assert_eq!(normalize_hu_value(-3000.0, 1.0, 0.0, CLIP), 0.0);
    }

    proptest! {
        #[test]
        fn monotone_in_raw(a in -5000.0f64..5000.0, b in -5000.0f64..5000.0, slope in 0.1f64..3.0, icpt in -2000.0f64..2000.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(normalize_hu_value(lo, slope, icpt, CLIP) <= normalize_hu_value(hi, slope, icpt, CLIP));
        }

        #[test]
        fn idempotent_on_normalized_values(n in 0.0f64..=1.0) {
            let again = normalize_hu_value(denormalize_hu(n, CLIP), 1.0, 0.0, CLIP);
            prop_assert!((again - n).abs() < 1e-12);
        }
    }
}
