use std::path::PathBuf;

use candle_core::DType;
use clap::Args;
use petct_core::dataset::{case_id, write_json, write_text};
use petct_core::Execution;
use petct_model::fusion::{PromptBundle, INSTRUCTION};
use petct_model::{ReportModel, VisualModality};
use serde::{Deserialize, Serialize};

use super::train::case_template;
use super::{cases_in, create_dir, read_prepared};
use crate::error::CliResult;
use crate::Context;

pub const GENERATIONS_FILE: &str = "generations.json";

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of prepared cases.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Greedy decoding instead of nucleus sampling.
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub case_id: String,
    pub stopped: bool,
    pub tokens: usize,
}

pub fn run(a: &GenerateArgs, ctx: &mut Context) -> CliResult<()> {
    let mut gcfg = ctx.config.generation.clone();
    gcfg.greedy |= a.greedy;
    if let Some(s) = a.seed {
        gcfg.seed = s;
    }
    if let Some(n) = a.max_new_tokens {
        gcfg.max_new_tokens = n;
    }
    gcfg.validate()?;
    let (model, _) = ReportModel::load_checkpoint(&a.checkpoint, DType::F32)?;
    let cases = cases_in(&a.data)?;
    create_dir(&a.out)?;
    let templates = &ctx.templates;
    let model = &model;
    let gcfg_ref = &gcfg;
    let records = ctx.exec.try_map(&cases, |dir| -> CliResult<GenerationRecord> {
        let case = read_prepared(dir)?;
        let template = case_template(&case, templates)?;
        let bundle = PromptBundle {
            ct: model.visual_tokens(VisualModality::Ct, &model.encode(&case.ct, Execution::Sequential)?)?,
            pet: model.visual_tokens(VisualModality::Pet, &model.encode(&case.pet, Execution::Sequential)?)?,
            layout: model.prompt_layout(&template)?,
            template_text: template,
            instruction_text: INSTRUCTION.to_string(),
        };
        let out = model.generate(&bundle, gcfg_ref)?;
        let id = case_id(dir);
        write_text(&a.out.join(format!("{id}.txt")), &out.text)?;
        if !out.stopped {
            log::warn!("{id}: generation hit the {}-token cap without a stop token", gcfg_ref.max_new_tokens);
        }
        Ok(GenerationRecord { case_id: id, stopped: out.stopped, tokens: out.token_ids.len() })
    })?;
    write_json(&a.out.join(GENERATIONS_FILE), &records)?;
    ctx.manifest.seed = Some(gcfg.seed);
    ctx.manifest.inputs.extend([a.checkpoint.clone(), a.data.clone()]);
    ctx.manifest.outputs.push(a.out.clone());
    ctx.manifest.metrics = serde_json::json!({
        "cases": records.len(),
        "stopped": records.iter().filter(|r| r.stopped).count(),
        "model_fingerprint": model.fingerprint(),
    });
    Ok(())
}
