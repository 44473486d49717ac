use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::config::PrepConfig;
use crate::volume::VolumeGrid;

use super::providers::{z_extent, MaskProvider};
use super::PrepError;

/// Every index used by [`crop_body_and_thigh`]. Ranges are half-open and
/// expressed in the input lattice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRecord {
    pub original_shape: [usize; 3],
    pub body_bbox: [[usize; 2]; 3],
    pub x: [usize; 2],
    pub y: [usize; 2],
    pub z: [usize; 2],
    pub pelvic_floor_z: usize,
    pub trunk_height_slices: usize,
    pub thigh_extension_slices: usize,
}

impl CropRecord {
    /// Index in the original volume of a voxel from the cropped one.
    pub fn to_original(&self, idx: [usize; 3]) -> [usize; 3] {
        [idx[0] + self.x[0], idx[1] + self.y[0], idx[2] + self.z[0]]
    }

    pub fn cropped_shape(&self) -> [usize; 3] {
        [self.x[1] - self.x[0], self.y[1] - self.y[0], self.z[1] - self.z[0]]
    }
}

/// Slices kept below the pelvic floor: `min(round(fraction · trunk), cap)`.
pub fn thigh_extension(trunk_height_slices: usize, cfg: &PrepConfig) -> usize {
    let ext = (cfg.thigh_extension_fraction * trunk_height_slices as f64).round() as usize;
    ext.min(cfg.thigh_extension_cap_slices)
}

/// Half-open bounding box of a mask, `None` when empty.
pub fn bounding_box(mask: &ndarray::Array3<bool>) -> Option<[[usize; 2]; 3]> {
    let (z0, z1) = z_extent(mask)?;
    let mut bb = [[usize::MAX, 0]; 3];
    bb[2] = [z0, z1];
    for ((x, y, _), &m) in mask.indexed_iter() {
        if m {
            bb[0] = [bb[0][0].min(x), bb[0][1].max(x + 1)];
            bb[1] = [bb[1][0].min(y), bb[1][1].max(y + 1)];
        }
    }
    Some(bb)
}

/// Crops CT and PET to the body bounding box (plus a margin on every face)
/// and removes everything more than the thigh extension below the pelvic floor.
///
/// The trunk height is measured from the pelvic floor to the top of the body.
pub fn crop_body_and_thigh(
    ct: &VolumeGrid,
    pet: &VolumeGrid,
    provider: &dyn MaskProvider,
    cfg: &PrepConfig,
) -> Result<(VolumeGrid, VolumeGrid, CropRecord), PrepError> {
    ct.check_same_lattice(pet)
        .map_err(|e| PrepError::InvalidVolume(e.to_string()))?;
    let body = provider.body_mask(ct)?;
    let bbox = bounding_box(&body.mask).ok_or(PrepError::NoBodyFound)?;
    let shape = ct.shape();
    let margin = cfg.body_margin_slices;
    let grow = |axis: usize| -> [usize; 2] {
        [
            bbox[axis][0].saturating_sub(margin),
            (bbox[axis][1] + margin).min(shape[axis]),
        ]
    };
    let (x, y, mut z) = (grow(0), grow(1), grow(2));

    let floor = body.pelvic_floor_z;
    if floor >= bbox[2][1] {
        return Err(PrepError::InvalidVolume(format!(
            "pelvic floor z={floor} lies above the body (top z={})",
            bbox[2][1]
        )));
    }
    let trunk = bbox[2][1] - floor;
    let ext = thigh_extension(trunk, cfg);
    z[0] = z[0].max(floor.saturating_sub(ext));

    let record = CropRecord {
        original_shape: shape,
        body_bbox: bbox,
        x,
        y,
        z,
        pelvic_floor_z: floor,
        trunk_height_slices: trunk,
        thigh_extension_slices: ext,
    };
    let cut = |v: &VolumeGrid| {
        let values = v
            .values
            .slice(s![x[0]..x[1], y[0]..y[1], z[0]..z[1]])
            .to_owned();
        v.with_values(values, v.modality)
    };
    Ok((cut(ct), cut(pet), record))
}
