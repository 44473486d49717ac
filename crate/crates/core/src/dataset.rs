//! On-disk case layout and patient-grouped chronological splitting.
//!
//! A case directory holds `ct.nii.gz`, `pet.nii.gz`, `meta.toml`,
//! `report.txt` and, when known, `labels.json`. Prepared cases additionally
//! hold `prep.json` and a `regions/` subdirectory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::ReportLabels;
use crate::nifti_io::{read_volume, write_volume, NiftiIoError};
use crate::prep::ScanMetadata;
use crate::report::{parse_report_fields, ReportError, ReportRecord};
use crate::synth::ScanRecord;
use crate::volume::{Modality, VolumeGrid};

pub const CT_FILE: &str = "ct.nii.gz";
pub const PET_FILE: &str = "pet.nii.gz";
pub const META_FILE: &str = "meta.toml";
pub const REPORT_FILE: &str = "report.txt";
pub const LABELS_FILE: &str = "labels.json";
pub const PREP_FILE: &str = "prep.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Nifti(#[from] NiftiIoError),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Report { path: String, source: ReportError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

pub fn read_text(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| DatasetError::Format { path: path.display().to_string(), message: e.to_string() })
}

/// Sorted subdirectories of `root` that contain a report file.
pub fn list_cases(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(REPORT_FILE).is_file())
        .collect();
    out.sort();
    Ok(out)
}

pub fn write_meta(path: &Path, meta: &ScanMetadata) -> Result<(), DatasetError> {
    let text = toml::to_string(meta).map_err(|e| DatasetError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    write_text(path, &text)
}

pub fn read_meta(path: &Path) -> Result<ScanMetadata, DatasetError> {
    toml::from_str(&read_text(path)?)
        .map_err(|e| DatasetError::Format { path: path.display().to_string(), message: e.to_string() })
}

pub fn read_report(path: &Path) -> Result<ReportRecord, DatasetError> {
    parse_report_fields(&read_text(path)?)
        .map_err(|source| DatasetError::Report { path: path.display().to_string(), source })
}

pub fn write_raw_case(dir: &Path, rec: &ScanRecord, labels: Option<&ReportLabels>) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_volume(&rec.ct_raw, &dir.join(CT_FILE))?;
    write_volume(&rec.pet_raw, &dir.join(PET_FILE))?;
    write_meta(&dir.join(META_FILE), &rec.meta)?;
    write_text(&dir.join(REPORT_FILE), &rec.report.to_document())?;
    if let Some(l) = labels {
        write_json(&dir.join(LABELS_FILE), l)?;
    }
    Ok(())
}

/// Loaded case: volumes with the modalities given by the caller.
pub struct CaseFiles {
    pub dir: PathBuf,
    pub ct: VolumeGrid,
    pub pet: VolumeGrid,
    pub meta: ScanMetadata,
    pub report: ReportRecord,
}

pub fn read_case(dir: &Path, ct_modality: Modality, pet_modality: Modality) -> Result<CaseFiles, DatasetError> {
    Ok(CaseFiles {
        dir: dir.to_path_buf(),
        ct: read_volume(&dir.join(CT_FILE), ct_modality)?,
        pet: read_volume(&dir.join(PET_FILE), pet_modality)?,
        meta: read_meta(&dir.join(META_FILE))?,
        report: read_report(&dir.join(REPORT_FILE))?,
    })
}

pub fn case_id(dir: &Path) -> String {
    dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// One scan as seen by the splitter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanKey {
    pub case_id: String,
    pub patient_id: String,
    pub scan_time: NaiveDateTime,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Orders patients by their first scan and cuts the sequence by the given
/// fractions, so every scan of a patient lands in the same partition and
/// later patients never leak into earlier partitions.
pub fn chronological_patient_split(scans: &[ScanKey], train_frac: f64, val_frac: f64) -> DataSplit {
    let mut patients: BTreeMap<&str, (NaiveDateTime, Vec<&ScanKey>)> = BTreeMap::new();
    for s in scans {
        let e = patients.entry(&s.patient_id).or_insert((s.scan_time, Vec::new()));
        e.0 = e.0.min(s.scan_time);
        e.1.push(s);
    }
    let mut order: Vec<(NaiveDateTime, &str, Vec<&ScanKey>)> =
        patients.into_iter().map(|(p, (t, v))| (t, p, v)).collect();
    order.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let n = order.len();
    let n_train = (train_frac * n as f64).round() as usize;
    let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train.min(n));
    let mut split = DataSplit::default();
    for (i, (_, _, mut scans)) in order.into_iter().enumerate() {
        scans.sort_by(|a, b| (a.scan_time, &a.case_id).cmp(&(b.scan_time, &b.case_id)));
        let bucket = if i < n_train {
            &mut split.train
        } else if i < n_train + n_val {
            &mut split.val
        } else {
            &mut split.test
        };
        bucket.extend(scans.into_iter().map(|s| s.case_id.clone()));
    }
    split
}
