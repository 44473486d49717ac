use std::path::{Path, PathBuf};

use clap::Args;
use petct_core::config::PrepConfig;
use petct_core::dataset::{
    case_id, read_case, write_json, write_meta, write_text, CT_FILE, LABELS_FILE, META_FILE, PET_FILE, PREP_FILE,
    REPORT_FILE,
};
use petct_core::nifti_io::write_volume;
use petct_core::prep::{prepare_case, FractionalLandmarks, PrepOptions, Providers, ThresholdMaskProvider};
use petct_core::{Execution, Modality};

use super::{cases_in, create_dir};
use crate::error::{CliError, CliResult};
use crate::Context;

#[derive(Debug, Args)]
pub struct PrepArgs {
    /// Directory of raw cases.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Correct the injected dose for decay up to acquisition.
    #[arg(long)]
    pub decay_correct: bool,
    /// Also write the four regional sub-volumes under `regions/`.
    #[arg(long)]
    pub regions: bool,
}

fn prep_one(src: &Path, out: &Path, a: &PrepArgs, cfg: &PrepConfig) -> CliResult<()> {
    let case = read_case(src, Modality::CtRaw, Modality::PetRaw)?;
    let mask = ThresholdMaskProvider::default();
    let landmarks = FractionalLandmarks::default();
    let providers = Providers { mask: &mask, landmarks: &landmarks };
    let opts = PrepOptions { decay_correct: a.decay_correct, regions: a.regions, exec: Execution::Sequential };
    let prepared = prepare_case(&case.ct, &case.pet, &case.meta, cfg, opts, &providers)?;
    let dst = out.join(case_id(src));
    create_dir(&dst)?;
    write_volume(&prepared.ct, &dst.join(CT_FILE))?;
    write_volume(&prepared.pet, &dst.join(PET_FILE))?;
    write_meta(&dst.join(META_FILE), &case.meta)?;
    write_text(&dst.join(REPORT_FILE), &case.report.to_document())?;
    if src.join(LABELS_FILE).is_file() {
        std::fs::copy(src.join(LABELS_FILE), dst.join(LABELS_FILE))
            .map_err(|e| CliError::Data(format!("{}: {e}", src.display())))?;
    }
    write_json(&dst.join(PREP_FILE), &prepared.sidecar(a.decay_correct))?;
    for r in &prepared.regions {
        let rd = dst.join("regions").join(r.range.region.name());
        create_dir(&rd)?;
        write_volume(&r.ct, &rd.join(CT_FILE))?;
        write_volume(&r.pet, &rd.join(PET_FILE))?;
    }
    Ok(())
}

pub fn run(a: &PrepArgs, ctx: &mut Context) -> CliResult<()> {
    let cases = cases_in(&a.input)?;
    create_dir(&a.out)?;
    let cfg = &ctx.config.prep;
    ctx.exec.try_map(&cases, |src| prep_one(src, &a.out, a, cfg))?;
    ctx.manifest.inputs.push(a.input.clone());
    ctx.manifest.outputs.push(a.out.clone());
    ctx.manifest.metrics = serde_json::json!({ "cases": cases.len() });
    log::info!("prepared {} cases into {}", cases.len(), a.out.display());
    Ok(())
}
