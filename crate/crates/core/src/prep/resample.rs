use ndarray::{Array3, Axis};

use crate::config::PrepConfig;
use crate::exec::Execution;
use crate::volume::{Orientation, VolumeGrid};

use super::PrepError;

/// Output size along one axis: `round(n · old / new)`, halves away from zero,
/// never below one voxel.
pub fn resampled_size(n: usize, old_spacing: f64, new_spacing: f64) -> usize {
    let s = (n as f64 * old_spacing / new_spacing).round();
    (s as usize).max(1)
}

/// Permutes and flips axes so that the volume is stored in RAS order.
/// Exact: no interpolation happens here.
pub fn reorient_to_ras(v: &VolumeGrid) -> VolumeGrid {
    if v.orientation.is_ras() {
        return v.clone();
    }
    // source axis holding each world axis
    let mut src_of = [0usize; 3];
    for (src, dir) in v.orientation.0.iter().enumerate() {
        src_of[dir.world_axis()] = src;
    }
    let mut values = v.values.clone().permuted_axes([src_of[0], src_of[1], src_of[2]]);
    for (world, &src) in src_of.iter().enumerate() {
        if !v.orientation.0[src].is_positive() {
            values.invert_axis(Axis(world));
        }
    }
    let values = values.as_standard_layout().to_owned();
    VolumeGrid {
        values,
        spacing_mm: [v.spacing_mm[src_of[0]], v.spacing_mm[src_of[1]], v.spacing_mm[src_of[2]]],
        orientation: Orientation::RAS,
        modality: v.modality,
    }
}

/// Continuous source coordinate of output voxel `i`, voxel centres aligned.
fn source_coord(i: usize, out_spacing: f64, in_spacing: f64, in_len: usize) -> f64 {
    let c = (i as f64 + 0.5) * out_spacing / in_spacing - 0.5;
    c.clamp(0.0, (in_len - 1) as f64)
}

#[derive(Clone, Copy)]
struct AxisSample {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn axis_samples(out_len: usize, out_spacing: f64, in_spacing: f64, in_len: usize, nearest: bool) -> Vec<AxisSample> {
    (0..out_len)
        .map(|i| {
            let c = source_coord(i, out_spacing, in_spacing, in_len);
            if nearest {
                let n = (c.round() as usize).min(in_len - 1);
                AxisSample { lo: n, hi: n, frac: 0.0 }
            } else {
                let lo = c.floor() as usize;
                let hi = (lo + 1).min(in_len - 1);
                AxisSample { lo, hi, frac: c - lo as f64 }
            }
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + t * (b - a)
    }
}

/// Resamples a RAS volume onto a lattice with the given spacing and shape.
/// Masks use nearest neighbour, everything else trilinear interpolation.
pub fn resample_to_lattice(
    v: &VolumeGrid,
    spacing_mm: [f64; 3],
    shape: [usize; 3],
    exec: Execution,
) -> Result<VolumeGrid, PrepError> {
    if !v.orientation.is_ras() {
        return Err(PrepError::InvalidVolume("resampling expects RAS input".into()));
    }
    v.validate().map_err(|e| PrepError::InvalidVolume(e.to_string()))?;
    if shape.iter().any(|&d| d == 0) {
        return Err(PrepError::InvalidVolume(format!("zero-extent target shape {shape:?}")));
    }
    let nearest = v.modality.is_mask();
    let in_shape = v.shape();
    let sx = axis_samples(shape[0], spacing_mm[0], v.spacing_mm[0], in_shape[0], nearest);
    let sy = axis_samples(shape[1], spacing_mm[1], v.spacing_mm[1], in_shape[1], nearest);
    let sz = axis_samples(shape[2], spacing_mm[2], v.spacing_mm[2], in_shape[2], nearest);
    let src = &v.values;
    let mut out = vec![0.0f64; shape[0] * shape[1] * shape[2]];
    let slab = shape[1] * shape[2];
    exec.for_each_chunk_mut(&mut out, slab, |ix, chunk| {
        let ax = sx[ix];
        for (iy, ay) in sy.iter().enumerate() {
            for (iz, az) in sz.iter().enumerate() {
                let g = |x: usize, y: usize, z: usize| src[[x, y, z]];
                let c00 = lerp(g(ax.lo, ay.lo, az.lo), g(ax.hi, ay.lo, az.lo), ax.frac);
                let c10 = lerp(g(ax.lo, ay.hi, az.lo), g(ax.hi, ay.hi, az.lo), ax.frac);
                let c01 = lerp(g(ax.lo, ay.lo, az.hi), g(ax.hi, ay.lo, az.hi), ax.frac);
                let c11 = lerp(g(ax.lo, ay.hi, az.hi), g(ax.hi, ay.hi, az.hi), ax.frac);
                let c0 = lerp(c00, c10, ay.frac);
                let c1 = lerp(c01, c11, ay.frac);
                chunk[iy * shape[2] + iz] = lerp(c0, c1, az.frac);
            }
        }
    });
    let values = Array3::from_shape_vec((shape[0], shape[1], shape[2]), out)
        .expect("buffer sized from shape");
    Ok(VolumeGrid {
        values,
        spacing_mm,
        orientation: Orientation::RAS,
        modality: v.modality,
    })
}

/// Reorients to RAS and resamples to `cfg.target_spacing_mm`.
pub fn resample_reorient(v: &VolumeGrid, cfg: &PrepConfig, exec: Execution) -> Result<VolumeGrid, PrepError> {
    v.validate().map_err(|e| PrepError::InvalidVolume(e.to_string()))?;
    let ras = reorient_to_ras(v);
    let shape = target_shape(&ras, cfg);
    resample_to_lattice(&ras, cfg.target_spacing_mm, shape, exec)
}

fn target_shape(ras: &VolumeGrid, cfg: &PrepConfig) -> [usize; 3] {
    let s = ras.shape();
    [
        resampled_size(s[0], ras.spacing_mm[0], cfg.target_spacing_mm[0]),
        resampled_size(s[1], ras.spacing_mm[1], cfg.target_spacing_mm[1]),
        resampled_size(s[2], ras.spacing_mm[2], cfg.target_spacing_mm[2]),
    ]
}

/// Resamples PET to the target spacing and CT onto the identical lattice.
/// Returns `(ct, pet)`.
pub fn resample_pair(
    ct: &VolumeGrid,
    pet: &VolumeGrid,
    cfg: &PrepConfig,
    exec: Execution,
) -> Result<(VolumeGrid, VolumeGrid), PrepError> {
    let pet_out = resample_reorient(pet, cfg, exec)?;
    ct.validate().map_err(|e| PrepError::InvalidVolume(e.to_string()))?;
    let ct_ras = reorient_to_ras(ct);
    let ct_out = resample_to_lattice(&ct_ras, cfg.target_spacing_mm, pet_out.shape(), exec)?;
    Ok((ct_out, pet_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{AxisDir, Modality};
    use proptest::prelude::*;

    fn ramp(shape: [usize; 3], spacing: [f64; 3], orientation: Orientation) -> VolumeGrid {
        let values = Array3::from_shape_fn((shape[0], shape[1], shape[2]), |(x, y, z)| {
            (x * 10000 + y * 100 + z) as f64 + 0.25
        });
        VolumeGrid { values, spacing_mm: spacing, orientation, modality: Modality::PetSuv }
    }

    #[test]
    fn identity_resample_is_bit_exact() {
        let v = ramp([7, 5, 9], [1.5, 1.5, 3.0], Orientation::RAS);
        let out = resample_reorient(&v, &PrepConfig::default(), Execution::Parallel).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn size_formula() {
        let v = VolumeGrid::filled([100, 100, 100], 1.0, [3.0, 3.0, 3.0], Modality::PetSuv);
        let out = resample_reorient(&v, &PrepConfig::default(), Execution::Parallel).unwrap();
        assert_eq!(out.shape(), [200, 200, 100]);
        assert_eq!(resampled_size(3, 0.5, 3.0), 1);
        assert_eq!(resampled_size(1, 0.1, 3.0), 1);
        // 5 * 0.75 / 1.5 = 2.5 -> 3
        assert_eq!(resampled_size(5, 0.75, 1.5), 3);
    }

    #[test]
    fn constant_volume_stays_constant() {
        let v = VolumeGrid::filled([9, 7, 5], 3.7, [2.2, 0.9, 4.1], Modality::PetSuv);
        let out = resample_reorient(&v, &PrepConfig::default(), Execution::Sequential).unwrap();
        assert!(out.values.iter().all(|&x| x == 3.7));
    }

    #[test]
    fn masks_use_nearest_neighbour() {
        let mut v = VolumeGrid::filled([6, 6, 6], 0.0, [3.0, 3.0, 3.0], Modality::Mask);
        v.values[[2, 2, 2]] = 1.0;
        let out = resample_reorient(&v, &PrepConfig::default(), Execution::Parallel).unwrap();
        assert!(out.values.iter().all(|&x| x == 0.0 || x == 1.0));
        assert!(out.values.iter().any(|&x| x == 1.0));
    }

    #[test]
    fn reorientation_flips_and_permutes() {
        let lps = Orientation([AxisDir::L, AxisDir::P, AxisDir::S]);
        let v = ramp([3, 4, 5], [1.0, 2.0, 3.0], lps);
        let r = reorient_to_ras(&v);
        assert_eq!(r.shape(), [3, 4, 5]);
        assert_eq!(r.values[[0, 0, 0]], v.values[[2, 3, 0]]);
        let sar = Orientation([AxisDir::S, AxisDir::A, AxisDir::R]);
        let v = ramp([3, 4, 5], [1.0, 2.0, 3.0], sar);
        let r = reorient_to_ras(&v);
        assert_eq!(r.shape(), [5, 4, 3]);
        assert_eq!(r.spacing_mm, [3.0, 2.0, 1.0]);
        assert_eq!(r.values[[4, 1, 2]], v.values[[2, 1, 4]]);
    }

    #[test]
    fn degenerate_axis_rejected() {
        let v = VolumeGrid {
            values: Array3::zeros((0, 3, 3)),
            spacing_mm: [1.0; 3],
            orientation: Orientation::RAS,
            modality: Modality::PetSuv,
        };
        assert!(matches!(
            resample_reorient(&v, &PrepConfig::default(), Execution::Parallel),
            Err(PrepError::InvalidVolume(_))
        ));
    }

    #[test]
    fn pair_shares_lattice() {
        let pet = VolumeGrid::filled([20, 20, 10], 1.0, [4.0, 4.0, 3.0], Modality::PetSuv);
        let ct = VolumeGrid::filled([80, 80, 30], 0.5, [1.0, 1.0, 1.0], Modality::CtNorm);
        let (c, p) = resample_pair(&ct, &pet, &PrepConfig::default(), Execution::Parallel).unwrap();
        c.check_same_lattice(&p).unwrap();
    }

    proptest! {
        #[test]
        fn sequential_and_parallel_agree(nx in 1usize..9, ny in 1usize..9, nz in 1usize..9, s in 0.5f64..4.0) {
            let v = ramp([nx, ny, nz], [s, s * 1.3, s * 0.7], Orientation::RAS);
            let cfg = PrepConfig::default();
            let a = resample_reorient(&v, &cfg, Execution::Sequential).unwrap();
            let b = resample_reorient(&v, &cfg, Execution::Parallel).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
