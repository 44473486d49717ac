//! NIfTI-1 reading and writing of [`VolumeGrid`]s.
//!
//! Voxel values are stored as float64. Spacing and orientation travel in
//! `pixdim` and the sform affine (RAS+ world, as NIfTI defines it); the
//! modality is not part of the file and is supplied by the caller.

use std::path::Path;

use ndarray::Ix3;
use nifti::writer::WriterOptions;
use nifti::{IntoNdArray, NiftiHeader, NiftiObject, ReaderOptions};
use thiserror::Error;

use crate::volume::{AxisDir, Modality, Orientation, VolumeGrid};

#[derive(Debug, Error)]
pub enum NiftiIoError {
    #[error("{path}: {source}")]
    Nifti { path: String, source: nifti::NiftiError },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn dir_for(world: usize, positive: bool) -> AxisDir {
    match (world, positive) {
        (0, true) => AxisDir::R,
        (0, false) => AxisDir::L,
        (1, true) => AxisDir::A,
        (1, false) => AxisDir::P,
        (2, true) => AxisDir::S,
        _ => AxisDir::I,
    }
}

/// Axis directions of the columns of a 3x3 direction/scale block.
pub fn orientation_from_affine(rows: [[f64; 3]; 3]) -> Option<Orientation> {
    let mut axes = [AxisDir::R; 3];
    for (i, slot) in axes.iter_mut().enumerate() {
        let col = [rows[0][i], rows[1][i], rows[2][i]];
        let w = (0..3).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()))?;
        if col[w] == 0.0 {
            return None;
        }
        *slot = dir_for(w, col[w] > 0.0);
    }
    Orientation::new(axes).ok()
}

pub fn write_volume(v: &VolumeGrid, path: &Path) -> Result<(), NiftiIoError> {
    let mut hdr = NiftiHeader::default();
    hdr.pixdim = [1.0; 8];
    let mut srow = [[0f32; 4]; 3];
    for (i, dir) in v.orientation.0.iter().enumerate() {
        hdr.pixdim[i + 1] = v.spacing_mm[i] as f32;
        let sign = if dir.is_positive() { 1.0 } else { -1.0 };
        srow[dir.world_axis()][i] = sign * v.spacing_mm[i] as f32;
    }
    hdr.sform_code = 1;
    hdr.qform_code = 0;
    hdr.srow_x = srow[0];
    hdr.srow_y = srow[1];
    hdr.srow_z = srow[2];
    hdr.xyzt_units = 2; // millimetres
    WriterOptions::new(path)
        .reference_header(&hdr)
        .write_nifti(&v.values)
        .map_err(|source| NiftiIoError::Nifti { path: path.display().to_string(), source })
}

pub fn read_volume(path: &Path, modality: Modality) -> Result<VolumeGrid, NiftiIoError> {
    let p = path.display().to_string();
    let obj = ReaderOptions::new()
        .read_file(path)
        .map_err(|source| NiftiIoError::Nifti { path: p.clone(), source })?;
    let hdr = obj.header().clone();
    let values = obj
        .into_volume()
        .into_ndarray::<f64>()
        .map_err(|source| NiftiIoError::Nifti { path: p.clone(), source })?
        .into_dimensionality::<Ix3>()
        .map_err(|e| NiftiIoError::Format { path: p.clone(), message: format!("expected 3D volume: {e}") })?
        .as_standard_layout()
        .into_owned();
    let spacing_mm = [1, 2, 3].map(|i| hdr.pixdim[i].abs() as f64);
    let orientation = if hdr.sform_code > 0 {
        let rows = [hdr.srow_x, hdr.srow_y, hdr.srow_z].map(|r| [r[0] as f64, r[1] as f64, r[2] as f64]);
        orientation_from_affine(rows).ok_or_else(|| NiftiIoError::Format {
            path: p.clone(),
            message: "degenerate sform affine".into(),
        })?
    } else {
        Orientation::RAS
    };
    VolumeGrid::new(values, spacing_mm, orientation, modality)
        .map_err(|e| NiftiIoError::Format { path: p, message: e.to_string() })
}
