use std::path::{Path, PathBuf};

use candle_core::DType;
use clap::Args;
use petct_core::dataset::{case_id, read_json, write_json, CaseFiles};
use petct_core::prep::BodyRegion;
use petct_core::report::{split_report_by_region, RuleSplitter, TemplateDictionary};
use petct_core::{ConfigSet, Execution};
use petct_model::base::{base_fingerprint, pretrain_base, BaseModel};
use petct_model::model::default_vocab;
use petct_model::train::{TrainExample, Trainer};
use petct_model::{ModelConfig, ReportModel};

use super::regions::REGION_FILE;
use super::{cases_in, read_prepared};
use crate::commands::split::SPLIT_FILE;
use crate::error::{CliError, CliResult};
use crate::Context;

pub const LOSSES_FILE: &str = "losses.json";

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of prepared (or regional) cases.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Reuse a pretrained base decoder instead of pretraining one.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Directory holding a split file; only its training partition is used.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

/// Template matching a case: the whole healthy template, or its section for
/// regional cases.
pub fn case_template(case: &CaseFiles, templates: &TemplateDictionary) -> CliResult<String> {
    let full = templates.lookup(case.meta.center_id, case.meta.gender)?;
    let marker = case.dir.join(REGION_FILE);
    if !marker.is_file() {
        return Ok(full.to_string());
    }
    let name = std::fs::read_to_string(&marker).map_err(|e| CliError::Data(format!("{}: {e}", marker.display())))?;
    let region = BodyRegion::ALL
        .into_iter()
        .find(|r| r.name() == name.trim())
        .ok_or_else(|| CliError::Data(format!("{}: unknown region {name:?}", marker.display())))?;
    Ok(split_report_by_region(full, &RuleSplitter)?.get(region).to_string())
}

/// Selected case directories, honouring an optional split's training partition.
pub fn training_cases(data: &Path, split: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    let mut cases = cases_in(data)?;
    if let Some(dir) = split {
        let s: petct_core::dataset::DataSplit = read_json(&dir.join(SPLIT_FILE))?;
        cases.retain(|c| s.train.contains(&case_id(c)));
        if cases.is_empty() {
            return Err(CliError::Data("split selects no training cases".into()));
        }
    }
    Ok(cases)
}

pub fn obtain_base(config: &ConfigSet, base: Option<&Path>, templates: &TemplateDictionary) -> CliResult<BaseModel> {
    let width = config.encoder.decoder_width;
    let slots = config.encoder.output_tokens;
    let vocab = default_vocab();
    let expected = base_fingerprint(width, &config.decoder, &config.pretrain, slots, &vocab);
    if let Some(dir) = base {
        let b = BaseModel::load(dir)?;
        if b.meta.fingerprint != expected {
            return Err(CliError::Config(petct_core::ConfigError::Constraint {
                key: "pretrain".into(),
                message: format!("base decoder in {} was pretrained with a different configuration", dir.display()),
            }));
        }
        return Ok(b);
    }
    let steps = config.pretrain.steps;
    pretrain_base(
        width,
        &config.decoder,
        &config.pretrain,
        slots,
        &vocab,
        templates,
        config.fusion.max_input_tokens,
        DType::F32,
        |s, l| {
            if (s + 1) % 25 == 0 || s + 1 == steps {
                log::info!("pretrain step {}/{steps} loss {l:.4}", s + 1);
            }
        },
    )
    .map_err(CliError::from)
}

pub fn run(a: &TrainArgs, ctx: &mut Context) -> CliResult<()> {
    let config = &ctx.config;
    let cases = training_cases(&a.data, a.split.as_deref())?;
    let base = obtain_base(config, a.base.as_deref(), &ctx.templates)?;
    let pretrain_loss = base.meta.losses.last().copied();
    let model = ReportModel::new(ModelConfig::from_set(config), Some(base), DType::F32)?;
    let regional = cases.iter().filter(|c| c.join(REGION_FILE).is_file()).count();
    if config.train.region_wise && regional != cases.len() {
        return Err(CliError::Data("train.region_wise requires regional cases (see split-regions)".into()));
    }
    let templates = &ctx.templates;
    let model_ref = &model;
    let examples = ctx.exec.try_map(&cases, |dir| -> CliResult<TrainExample> {
        let case = read_prepared(dir)?;
        let template = case_template(&case, templates)?;
        Ok(TrainExample::from_volumes(
            model_ref,
            &case_id(dir),
            &case.ct,
            &case.pet,
            &template,
            &case.report.findings,
            Execution::Sequential,
        )?)
    })?;
    let mut trainer = Trainer::new(&model, config.train.clone())?;
    let losses = trainer.train(&examples, |r| {
        if r.step % 10 == 0 || r.step == 1 {
            log::info!("step {} lr {:.3e} loss {:.4}", r.step, r.lr, r.loss);
        }
    })?;
    let steps = trainer.step();
    drop(trainer);
    model.save_checkpoint(&a.out, steps)?;
    write_json(&a.out.join(LOSSES_FILE), &losses)?;
    ctx.manifest.seed = Some(config.train.seed);
    ctx.manifest.inputs.push(a.data.clone());
    ctx.manifest.inputs.extend(a.base.iter().cloned());
    ctx.manifest.outputs.push(a.out.clone());
    ctx.manifest.metrics = serde_json::json!({
        "cases": examples.len(),
        "steps": steps,
        "first_loss": losses.first(),
        "final_loss": losses.last(),
        "pretrain_final_loss": pretrain_loss,
        "model_fingerprint": model.fingerprint(),
    });
    Ok(())
}
