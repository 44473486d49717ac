use std::path::PathBuf;

use clap::Args;
use petct_core::dataset::{case_id, chronological_patient_split, read_meta, write_json, ScanKey, META_FILE};

use super::{cases_in, create_dir};
use crate::error::{CliError, CliResult};
use crate::Context;

pub const SPLIT_FILE: &str = "split.json";

#[derive(Debug, Args)]
pub struct SplitDatasetArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_frac: f64,
}

pub fn run(a: &SplitDatasetArgs, ctx: &mut Context) -> CliResult<()> {
    let ok = |f: f64| (0.0..=1.0).contains(&f);
    if !ok(a.train_frac) || !ok(a.val_frac) || a.train_frac + a.val_frac > 1.0 {
        return Err(CliError::Data(format!(
            "fractions train {} and val {} must lie in [0, 1] and sum to at most 1",
            a.train_frac, a.val_frac
        )));
    }
    let mut keys = Vec::new();
    for dir in cases_in(&a.input)? {
        let meta = read_meta(&dir.join(META_FILE))?;
        let id = case_id(&dir);
        keys.push(ScanKey {
            patient_id: meta.patient_id.clone().unwrap_or_else(|| id.clone()),
            case_id: id,
            scan_time: meta.acquisition_time,
        });
    }
    let split = chronological_patient_split(&keys, a.train_frac, a.val_frac);
    create_dir(&a.out)?;
    write_json(&a.out.join(SPLIT_FILE), &split)?;
    ctx.manifest.inputs.push(a.input.clone());
    ctx.manifest.outputs.push(a.out.join(SPLIT_FILE));
    ctx.manifest.metrics =
        serde_json::json!({ "train": split.train.len(), "val": split.val.len(), "test": split.test.len() });
    Ok(())
}
