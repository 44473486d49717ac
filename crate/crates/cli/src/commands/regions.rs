use std::path::{Path, PathBuf};

use clap::Args;
use petct_core::config::PrepConfig;
use petct_core::dataset::{case_id, write_meta, write_text, CT_FILE, META_FILE, PET_FILE, REPORT_FILE};
use petct_core::nifti_io::write_volume;
use petct_core::prep::{split_regions, FractionalLandmarks};
use petct_core::report::{split_report_by_region, ReportRecord, RuleSplitter};

use super::{cases_in, create_dir, read_prepared};
use crate::error::CliResult;
use crate::Context;

/// Marker naming the body region of a regional case.
pub const REGION_FILE: &str = "region.txt";

#[derive(Debug, Args)]
pub struct SplitRegionsArgs {
    /// Directory of prepared whole-body cases.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn split_one(src: &Path, out: &Path, cfg: &PrepConfig) -> CliResult<usize> {
    let case = read_prepared(src)?;
    let texts = split_report_by_region(&case.report.findings, &RuleSplitter)?;
    let landmarks = FractionalLandmarks::default();
    let ct = split_regions(&case.ct, &landmarks, cfg)?;
    let pet = split_regions(&case.pet, &landmarks, cfg)?;
    for ((range, ct), (_, pet)) in ct.iter().zip(&pet) {
        let dst = out.join(format!("{}__{}", case_id(src), range.region.name()));
        create_dir(&dst)?;
        write_volume(ct, &dst.join(CT_FILE))?;
        write_volume(pet, &dst.join(PET_FILE))?;
        write_meta(&dst.join(META_FILE), &case.meta)?;
        let report = ReportRecord { findings: texts.get(range.region).to_string(), ..case.report.clone() };
        write_text(&dst.join(REPORT_FILE), &report.to_document())?;
        write_text(&dst.join(REGION_FILE), range.region.name())?;
    }
    Ok(ct.len())
}

pub fn run(a: &SplitRegionsArgs, ctx: &mut Context) -> CliResult<()> {
    let cases = cases_in(&a.input)?;
    create_dir(&a.out)?;
    let cfg = &ctx.config.prep;
    let written: usize = ctx.exec.try_map(&cases, |src| split_one(src, &a.out, cfg))?.into_iter().sum();
    ctx.manifest.inputs.push(a.input.clone());
    ctx.manifest.outputs.push(a.out.clone());
    ctx.manifest.metrics = serde_json::json!({ "cases": cases.len(), "regional_cases": written });
    Ok(())
}
