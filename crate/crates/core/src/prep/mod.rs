//! Volumetric preprocessing: SUV, HU windowing, RAS resampling, body cropping
//! and regional decomposition.

pub mod crop;
pub mod hu;
pub mod metadata;
pub mod pipeline;
pub mod providers;
pub mod regions;
pub mod resample;
pub mod suv;

use thiserror::Error;

use crate::volume::Modality;

pub use crop::{crop_body_and_thigh, CropRecord};
pub use hu::convert_and_clip_hu;
pub use metadata::{Gender, ScanMetadata};
pub use pipeline::{prepare_case, PrepOptions, PrepSidecar, PreparedCase, PreparedRegion, Providers};
pub use providers::{
    BodyMask, FixedLandmarks, FixedMask, FractionalLandmarks, LandmarkProvider, MaskProvider,
    ThresholdMaskProvider,
};
pub use regions::{region_ranges, split_regions, BodyRegion, RegionRange};
pub use resample::{resample_pair, resample_reorient};
pub use suv::compute_suv;

#[derive(Debug, Error, PartialEq)]
pub enum PrepError {
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
    #[error("expected {expected:?} volume, got {found:?}")]
    WrongModality { expected: Modality, found: Modality },
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("no body found in CT volume")]
    NoBodyFound,
    #[error("invalid landmarks: {0}")]
    InvalidLandmarks(String),
}
