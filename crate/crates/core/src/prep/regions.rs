use serde::{Deserialize, Serialize};

use crate::config::PrepConfig;
use crate::volume::VolumeGrid;

use super::providers::LandmarkProvider;
use super::PrepError;

/// The four coarse report regions, listed in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyRegion {
    HeadNeck,
    Chest,
    Abdomen,
    PelvisBelow,
}

impl BodyRegion {
    pub const ALL: [BodyRegion; 4] = [
        BodyRegion::HeadNeck,
        BodyRegion::Chest,
        BodyRegion::Abdomen,
        BodyRegion::PelvisBelow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BodyRegion::HeadNeck => "head_neck",
            BodyRegion::Chest => "chest",
            BodyRegion::Abdomen => "abdomen",
            BodyRegion::PelvisBelow => "pelvis_below",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Interval between landmarks `k` and `k + 1`, counted from the inferior end.
    fn landmark_interval(self) -> usize {
        3 - self.index()
    }
}

impl std::fmt::Display for BodyRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionRange {
    pub region: BodyRegion,
    /// Half-open z range in the input volume.
    pub z: [usize; 2],
}

/// Buffered z ranges for the four regions in report order.
///
/// `landmarks` ascend from inferior to superior. The most inferior and most
/// superior regions always reach the volume faces so the ranges cover every
/// slice; internal boundaries are widened by `buffer` slices on each side.
pub fn region_ranges(
    landmarks: [usize; 5],
    depth: usize,
    buffer: usize,
) -> Result<[RegionRange; 4], PrepError> {
    if landmarks.windows(2).any(|w| w[0] > w[1]) {
        return Err(PrepError::InvalidLandmarks(format!(
            "landmarks must be non-decreasing, got {landmarks:?}"
        )));
    }
    if landmarks[4] > depth {
        return Err(PrepError::InvalidLandmarks(format!(
            "landmark {} beyond volume depth {depth}",
            landmarks[4]
        )));
    }
    let mut b = landmarks;
    b[0] = 0;
    b[4] = depth;
    Ok(BodyRegion::ALL.map(|region| {
        let k = region.landmark_interval();
        let lo = if k == 0 { 0 } else { b[k].saturating_sub(buffer) };
        let hi = if k == 3 { depth } else { (b[k + 1] + buffer).min(depth) };
        RegionRange { region, z: [lo, hi] }
    }))
}

pub fn crop_z(v: &VolumeGrid, z: [usize; 2]) -> VolumeGrid {
    let values = v.values.slice(ndarray::s![.., .., z[0]..z[1]]).to_owned();
    v.with_values(values, v.modality)
}

/// Splits `v` into its four regional sub-volumes.
pub fn split_regions(
    v: &VolumeGrid,
    provider: &dyn LandmarkProvider,
    cfg: &PrepConfig,
) -> Result<Vec<(RegionRange, VolumeGrid)>, PrepError> {
    let depth = v.shape()[2];
    let ranges = region_ranges(provider.landmarks(v)?, depth, cfg.region_buffer_slices)?;
    ranges
        .into_iter()
        .map(|r| {
            if r.z[0] >= r.z[1] {
                return Err(PrepError::InvalidLandmarks(format!(
                    "region {} is empty after buffering",
                    r.region
                )));
            }
            Ok((r, crop_z(v, r.z)))
        })
        .collect()
}
