use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::PrepError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }

    pub fn parse(s: &str) -> Option<Gender> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Some(Gender::Male),
            "female" | "f" => Some(Gender::Female),
            _ => None,
        }
    }

    pub fn other(self) -> Gender {
        match self {
            Gender::Male => Gender::Female,
            Gender::Female => Gender::Male,
        }
    }
}

/// Acquisition metadata needed for quantitative PET and CT calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanMetadata {
    pub body_weight_g: f64,
    pub injected_dose_bq: f64,
    pub injection_time: NaiveDateTime,
    pub acquisition_time: NaiveDateTime,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    pub center_id: u8,
    pub gender: Gender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
}

impl ScanMetadata {
    pub fn validate(&self) -> Result<(), PrepError> {
        if !(self.body_weight_g > 0.0) || !self.body_weight_g.is_finite() {
            return Err(PrepError::InvalidMetadata(format!(
                "body weight must be positive, got {}",
                self.body_weight_g
            )));
        }
        if !(self.injected_dose_bq > 0.0) || !self.injected_dose_bq.is_finite() {
            return Err(PrepError::InvalidMetadata(format!(
                "injected dose must be positive, got {}",
                self.injected_dose_bq
            )));
        }
        if self.acquisition_time < self.injection_time {
            return Err(PrepError::InvalidMetadata(
                "acquisition precedes injection".into(),
            ));
        }
        if !(1..=5).contains(&self.center_id) {
            return Err(PrepError::InvalidMetadata(format!(
                "center id {} outside 1..=5",
                self.center_id
            )));
        }
        Ok(())
    }

    /// Seconds between injection and acquisition, millisecond resolution.
    pub fn uptake_seconds(&self) -> f64 {
        (self.acquisition_time - self.injection_time).num_milliseconds() as f64 / 1000.0
    }
}
