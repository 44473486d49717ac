use std::path::PathBuf;

use clap::Args;
use petct_core::dataset::{case_id, read_report, write_json, write_text, REPORT_FILE};
use petct_core::labels::LabelMatrix;
use petct_core::llm::HttpChatClient;
use petct_core::metrics::extract::{extract_corpus, ExtractError, LabelExtractor, RuleExtractor};
use petct_core::metrics::{
    corpus_bleu, corpus_meteor, corpus_rouge_l, score_labels, segment_tokens, Backend, ExtractionCache,
    LlmExtractor, ScoreReport, SegmentMode, Variant,
};
use serde::{Deserialize, Serialize};

use super::{cases_in, create_dir};
use crate::error::{CliError, CliResult};
use crate::Context;

pub const SCORES_FILE: &str = "scores.json";
pub const TABLE_FILE: &str = "scores.txt";

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of reference cases.
    #[arg(long)]
    pub refs: PathBuf,
    /// Directory of `<case_id>.txt` generated findings.
    #[arg(long)]
    pub gens: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "rule")]
    pub backend: Backend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlgScores {
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub meteor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cases: Vec<String>,
    pub generated: ScoreReport,
    /// Every region predicted Normal.
    pub baseline: ScoreReport,
    pub nlg: NlgScores,
}

impl Evaluation {
    /// Macro F1 per variant, generated and baseline.
    pub fn petrg(&self, v: Variant) -> (f64, f64) {
        (self.generated.get(v).macro_f1, self.baseline.get(v).macro_f1)
    }
}

fn extractor(backend: Backend, ctx: &Context) -> CliResult<Box<dyn LabelExtractor>> {
    Ok(match backend {
        Backend::Rule => Box::new(RuleExtractor),
        Backend::Llm => {
            let cfg = &ctx.config.eval.llm;
            let client = HttpChatClient::from_config(cfg).map_err(ExtractError::from)?;
            let cache = if cfg.cache_path.is_empty() {
                None
            } else {
                Some(ExtractionCache::open(std::path::Path::new(&cfg.cache_path)).map_err(ExtractError::from)?)
            };
            Box::new(LlmExtractor { client, max_retries: cfg.max_retries, cache })
        }
    })
}

fn nlg(gens: &[String], refs: &[String]) -> CliResult<NlgScores> {
    let tok = |xs: &[String]| -> Vec<Vec<String>> {
        xs.iter().map(|t| segment_tokens(t, SegmentMode::Whitespace, None)).collect()
    };
    let (g, r) = (tok(gens), tok(refs));
    let mut bleu = [0.0; 4];
    for (i, b) in bleu.iter_mut().enumerate() {
        *b = corpus_bleu(&g, &r, i + 1)? / 100.0;
    }
    Ok(NlgScores { bleu, rouge_l: corpus_rouge_l(&g, &r)?, meteor: corpus_meteor(&g, &r)? })
}

pub fn run(a: &EvaluateArgs, ctx: &mut Context) -> CliResult<()> {
    let refs = cases_in(&a.refs)?;
    let gen_files = std::fs::read_dir(&a.gens)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.gens.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .count();
    if gen_files != refs.len() {
        return Err(CliError::Data(format!(
            "{} references but {} generated reports",
            refs.len(),
            gen_files
        )));
    }
    let mut ids = Vec::new();
    let mut ref_texts = Vec::new();
    let mut gen_texts = Vec::new();
    for dir in &refs {
        let id = case_id(dir);
        ref_texts.push(read_report(&dir.join(REPORT_FILE))?.findings);
        let g = a.gens.join(format!("{id}.txt"));
        gen_texts.push(
            std::fs::read_to_string(&g).map_err(|e| CliError::Data(format!("no generation for {id}: {e}")))?,
        );
        ids.push(id);
    }
    let backend = extractor(a.backend, ctx)?;
    let conc = ctx.config.eval.llm.max_concurrency;
    let truth = LabelMatrix::new(extract_corpus(&ref_texts, backend.as_ref(), ctx.exec, conc)?);
    let pred = LabelMatrix::new(extract_corpus(&gen_texts, backend.as_ref(), ctx.exec, conc)?);
    let exclude = ctx.config.eval.exclude_empty_classes;
    let eval = Evaluation {
        generated: score_labels(&truth, &pred, exclude, ctx.exec)?,
        baseline: score_labels(&truth, &LabelMatrix::all_normal(ids.len()), exclude, ctx.exec)?,
        nlg: nlg(&gen_texts, &ref_texts)?,
        cases: ids,
    };
    create_dir(&a.out)?;
    write_json(&a.out.join(SCORES_FILE), &eval)?;
    let table = format!(
        "generated\n{}\nall-normal baseline\n{}\nBLEU-1..4 {:?}  ROUGE-L {:.4}  METEOR {:.4}\n",
        eval.generated.table(),
        eval.baseline.table(),
        eval.nlg.bleu,
        eval.nlg.rouge_l,
        eval.nlg.meteor
    );
    write_text(&a.out.join(TABLE_FILE), &table)?;
    let variants: serde_json::Map<String, serde_json::Value> = Variant::ALL
        .iter()
        .map(|&v| {
            let (g, b) = eval.petrg(v);
            (v.name().to_string(), serde_json::json!({ "generated": g, "baseline": b }))
        })
        .collect();
    ctx.manifest.inputs.extend([a.refs.clone(), a.gens.clone()]);
    ctx.manifest.outputs.extend([a.out.join(SCORES_FILE), a.out.join(TABLE_FILE)]);
    ctx.manifest.metrics = serde_json::json!({ "petrg": variants, "nlg": eval.nlg });
    Ok(())
}
