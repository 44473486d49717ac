//! Voxel lattice shared by every preprocessing step.

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 3], [usize; 3]),
}

/// Physical meaning of the values stored in a [`VolumeGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    /// Reconstructed activity concentration in Bq/mL.
    PetRaw,
    /// Body-weight standardized uptake value.
    PetSuv,
    /// Stored CT values before the rescale slope/intercept.
    CtRaw,
    /// Hounsfield units, clipped to the configured window.
    CtHu,
    /// Hounsfield units mapped linearly onto `[0, 1]`.
    CtNorm,
    /// Binary or label mask; resampled with nearest neighbour.
    Mask,
}

impl Modality {
    pub fn is_mask(self) -> bool {
        self == Modality::Mask
    }
}

/// World direction an array axis points toward as its index increases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisDir {
    R,
    L,
    A,
    P,
    S,
    I,
}

impl AxisDir {
    /// 0 for the left-right axis, 1 for anterior-posterior, 2 for superior-inferior.
    pub fn world_axis(self) -> usize {
        match self {
            AxisDir::R | AxisDir::L => 0,
            AxisDir::A | AxisDir::P => 1,
            AxisDir::S | AxisDir::I => 2,
        }
    }

    /// True for R, A and S.
    pub fn is_positive(self) -> bool {
        matches!(self, AxisDir::R | AxisDir::A | AxisDir::S)
    }

    pub fn from_char(c: char) -> Option<AxisDir> {
        Some(match c.to_ascii_uppercase() {
            'R' => AxisDir::R,
            'L' => AxisDir::L,
            'A' => AxisDir::A,
            'P' => AxisDir::P,
            'S' => AxisDir::S,
            'I' => AxisDir::I,
            _ => return None,
        })
    }

    pub fn as_char(self) -> char {
        match self {
            AxisDir::R => 'R',
            AxisDir::L => 'L',
            AxisDir::A => 'A',
            AxisDir::P => 'P',
            AxisDir::S => 'S',
            AxisDir::I => 'I',
        }
    }
}

/// Axis-direction triple, e.g. `RAS` or `LPS`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Orientation(pub [AxisDir; 3]);

impl Orientation {
    pub const RAS: Orientation = Orientation([AxisDir::R, AxisDir::A, AxisDir::S]);

    /// Validates that each world axis is covered exactly once.
    pub fn new(axes: [AxisDir; 3]) -> Result<Self, VolumeError> {
        let mut seen = [false; 3];
        for a in axes {
            let w = a.world_axis();
            if seen[w] {
                return Err(VolumeError::Invalid(format!(
                    "orientation repeats world axis: {}",
                    Orientation(axes)
                )));
            }
            seen[w] = true;
        }
        Ok(Orientation(axes))
    }

    pub fn is_ras(&self) -> bool {
        *self == Orientation::RAS
    }
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for a in self.0 {
            write!(f, "{}", a.as_char())?;
        }
        Ok(())
    }
}

impl TryFrom<String> for Orientation {
    type Error = VolumeError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 3 {
            return Err(VolumeError::Invalid(format!("bad orientation code {s:?}")));
        }
        let mut axes = [AxisDir::R; 3];
        for (slot, c) in axes.iter_mut().zip(chars) {
            *slot = AxisDir::from_char(c)
                .ok_or_else(|| VolumeError::Invalid(format!("bad orientation code {s:?}")))?;
        }
        Orientation::new(axes)
    }
}

impl From<Orientation> for String {
    fn from(o: Orientation) -> String {
        o.to_string()
    }
}

/// A 3D scalar volume indexed `[x, y, z]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeGrid {
    pub values: Array3<f64>,
    pub spacing_mm: [f64; 3],
    pub orientation: Orientation,
    pub modality: Modality,
}

impl VolumeGrid {
    pub fn new(
        values: Array3<f64>,
        spacing_mm: [f64; 3],
        orientation: Orientation,
        modality: Modality,
    ) -> Result<Self, VolumeError> {
        let v = VolumeGrid {
            values,
            spacing_mm,
            orientation,
            modality,
        };
        v.validate()?;
        Ok(v)
    }

    /// Constant-valued RAS volume, mostly for tests and fixtures.
    pub fn filled(shape: [usize; 3], value: f64, spacing_mm: [f64; 3], modality: Modality) -> Self {
        VolumeGrid {
            values: Array3::from_elem((shape[0], shape[1], shape[2]), value),
            spacing_mm,
            orientation: Orientation::RAS,
            modality,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.values.shape();
        [s[0], s[1], s[2]]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Physical extent along each axis in millimetres.
    pub fn extent_mm(&self) -> [f64; 3] {
        let s = self.shape();
        [
            s[0] as f64 * self.spacing_mm[0],
            s[1] as f64 * self.spacing_mm[1],
            s[2] as f64 * self.spacing_mm[2],
        ]
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        if self.spacing_mm.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(VolumeError::Invalid(format!(
                "spacing must be positive, got {:?}",
                self.spacing_mm
            )));
        }
        if self.shape().iter().any(|&d| d == 0) {
            return Err(VolumeError::Invalid(format!(
                "zero-extent axis in shape {:?}",
                self.shape()
            )));
        }
        Orientation::new(self.orientation.0)?;
        let range = match self.modality {
            Modality::CtNorm => Some((0.0, 1.0)),
            Modality::CtHu => Some((-1000.0, 1000.0)),
            _ => None,
        };
        if let Some((lo, hi)) = range {
            if let Some(bad) = self.values.iter().find(|&&v| !(lo..=hi).contains(&v)) {
                return Err(VolumeError::Invalid(format!(
                    "{:?} value {bad} outside [{lo}, {hi}]",
                    self.modality
                )));
            }
        }
        Ok(())
    }

    /// Requires `other` to live on the same lattice (shape, spacing, orientation).
    pub fn check_same_lattice(&self, other: &VolumeGrid) -> Result<(), VolumeError> {
        if self.shape() != other.shape() {
            return Err(VolumeError::ShapeMismatch(self.shape(), other.shape()));
        }
        if self.spacing_mm != other.spacing_mm || self.orientation != other.orientation {
            return Err(VolumeError::Invalid(format!(
                "lattice mismatch: spacing {:?}/{:?}, orientation {}/{}",
                self.spacing_mm, other.spacing_mm, self.orientation, other.orientation
            )));
        }
        Ok(())
    }

    pub fn with_values(&self, values: Array3<f64>, modality: Modality) -> VolumeGrid {
        VolumeGrid {
            values,
            spacing_mm: self.spacing_mm,
            orientation: self.orientation,
            modality,
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}
