//! Pluggable anatomy sources used by cropping and regional decomposition.
//!
//! The bundled implementations are deterministic stand-ins for an external
//! segmentation model and a body-part regression model.

use std::collections::VecDeque;

use ndarray::Array3;

use crate::volume::{Modality, VolumeGrid};

use super::hu::denormalize_hu;
use super::PrepError;

/// Binary body mask plus the z index of the pelvic floor.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyMask {
    pub mask: Array3<bool>,
    pub pelvic_floor_z: usize,
}

pub trait MaskProvider: Send + Sync {
    fn body_mask(&self, ct: &VolumeGrid) -> Result<BodyMask, PrepError>;
}

/// Z indices, ascending from inferior to superior, delimiting the four
/// report regions: pelvis & below | abdomen | chest | head & neck.
pub trait LandmarkProvider: Send + Sync {
    fn landmarks(&self, v: &VolumeGrid) -> Result<[usize; 5], PrepError>;
}

/// HU threshold followed by the largest 6-connected component. The pelvic
/// floor is placed a fixed fraction of the body height above its lowest slice.
#[derive(Clone, Debug)]
pub struct ThresholdMaskProvider {
    pub hu_threshold: f64,
    pub hu_clip: [f64; 2],
    pub pelvic_floor_fraction: f64,
}

impl Default for ThresholdMaskProvider {
    fn default() -> Self {
        ThresholdMaskProvider {
            hu_threshold: -500.0,
            hu_clip: [-1000.0, 1000.0],
            pelvic_floor_fraction: 0.2,
        }
    }
}

impl MaskProvider for ThresholdMaskProvider {
    fn body_mask(&self, ct: &VolumeGrid) -> Result<BodyMask, PrepError> {
        let to_hu: Box<dyn Fn(f64) -> f64> = match ct.modality {
            Modality::CtHu => Box::new(|v| v),
            Modality::CtNorm => {
                let clip = self.hu_clip;
                Box::new(move |v| denormalize_hu(v, clip))
            }
            other => {
                return Err(PrepError::WrongModality {
                    expected: Modality::CtNorm,
                    found: other,
                })
            }
        };
        let above = ct.values.mapv(|v| to_hu(v) > self.hu_threshold);
        let mask = largest_component(&above);
        let (lo, hi) = z_extent(&mask).ok_or(PrepError::NoBodyFound)?;
        let height = hi - lo;
        let pelvic_floor_z = lo + (self.pelvic_floor_fraction * height as f64).round() as usize;
        Ok(BodyMask {
            mask,
            pelvic_floor_z: pelvic_floor_z.min(hi - 1),
        })
    }
}

/// Half-open z range covered by any set voxel.
pub fn z_extent(mask: &Array3<bool>) -> Option<(usize, usize)> {
    let mut lo = usize::MAX;
    let mut hi = 0;
    for ((_, _, z), &m) in mask.indexed_iter() {
        if m {
            lo = lo.min(z);
            hi = hi.max(z + 1);
        }
    }
    (lo != usize::MAX).then_some((lo, hi))
}

/// Keeps only the largest 6-connected component of `mask`.
pub fn largest_component(mask: &Array3<bool>) -> Array3<bool> {
    let shape = mask.dim();
    let mut label = Array3::<u32>::zeros(shape);
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for (idx, &m) in mask.indexed_iter() {
        if !m || label[idx] != 0 {
            continue;
        }
        let id = sizes.len() as u32;
        sizes.push(0);
        label[idx] = id;
        queue.push_back(idx);
        while let Some((x, y, z)) = queue.pop_front() {
            sizes[id as usize] += 1;
            let mut visit = |n: (usize, usize, usize)| {
                if mask[n] && label[n] == 0 {
                    label[n] = id;
                    queue.push_back(n);
                }
            };
            if x > 0 {
                visit((x - 1, y, z));
            }
            if x + 1 < shape.0 {
                visit((x + 1, y, z));
            }
            if y > 0 {
                visit((x, y - 1, z));
            }
            if y + 1 < shape.1 {
                visit((x, y + 1, z));
            }
            if z > 0 {
                visit((x, y, z - 1));
            }
            if z + 1 < shape.2 {
                visit((x, y, z + 1));
            }
        }
    }
    let best = sizes
        .iter()
        .enumerate()
        .skip(1)
        .max_by_key(|&(i, &s)| (s, std::cmp::Reverse(i)))
        .map(|(i, _)| i as u32);
    match best {
        Some(b) => label.mapv(|l| l == b),
        None => Array3::from_elem(shape, false),
    }
}

/// Landmarks at fixed fractions of the z extent.
#[derive(Clone, Debug)]
pub struct FractionalLandmarks {
    pub fractions: [f64; 5],
}

impl Default for FractionalLandmarks {
    fn default() -> Self {
        FractionalLandmarks {
            fractions: [0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

impl LandmarkProvider for FractionalLandmarks {
    fn landmarks(&self, v: &VolumeGrid) -> Result<[usize; 5], PrepError> {
        let depth = v.shape()[2] as f64;
        let mut out = [0usize; 5];
        for (o, f) in out.iter_mut().zip(self.fractions) {
            *o = (f * depth).round() as usize;
        }
        Ok(out)
    }
}

/// Landmarks supplied directly, e.g. from an external model's output.
#[derive(Clone, Debug)]
pub struct FixedLandmarks(pub [usize; 5]);

impl LandmarkProvider for FixedLandmarks {
    fn landmarks(&self, _v: &VolumeGrid) -> Result<[usize; 5], PrepError> {
        Ok(self.0)
    }
}

/// Mask and pelvic floor supplied directly.
#[derive(Clone, Debug)]
pub struct FixedMask(pub BodyMask);

impl MaskProvider for FixedMask {
    fn body_mask(&self, ct: &VolumeGrid) -> Result<BodyMask, PrepError> {
        let s = ct.shape();
        if self.0.mask.dim() != (s[0], s[1], s[2]) {
            let d = self.0.mask.dim();
            return Err(PrepError::InvalidVolume(format!(
                "mask shape {:?} does not match volume {:?}",
                [d.0, d.1, d.2],
                s
            )));
        }
        Ok(self.0.clone())
    }
}
