use std::path::PathBuf;

use clap::Args;
use petct_core::dataset::write_raw_case;
use petct_core::synth::{generate_case, PhantomSpec};

use super::create_dir;
use crate::error::CliResult;
use crate::Context;

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Seed of the `i`-th phantom of a run.
pub fn case_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)
}

pub fn run(a: &SynthArgs, ctx: &mut Context) -> CliResult<()> {
    ctx.config.synth.validate()?;
    create_dir(&a.out)?;
    let cfg = &ctx.config.synth;
    let templates = &ctx.templates;
    let ids: Vec<String> = ctx.exec.map_range(a.n, |i| -> CliResult<String> {
        let spec = PhantomSpec::random(case_seed(a.seed, i), cfg);
        let (rec, labels) = generate_case(&spec, templates)?;
        let id = format!("case_{i:04}");
        write_raw_case(&a.out.join(&id), &rec, Some(&labels))?;
        Ok(id)
    })
    .into_iter()
    .collect::<CliResult<_>>()?;
    ctx.manifest.seed = Some(a.seed);
    ctx.manifest.outputs.push(a.out.clone());
    ctx.manifest.metrics = serde_json::json!({ "cases": ids.len() });
    log::info!("wrote {} synthetic cases to {}", ids.len(), a.out.display());
    Ok(())
}
