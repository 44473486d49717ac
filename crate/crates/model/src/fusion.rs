//! Prompt assembly: visual token spans, the matched healthy-report template
//! and the instruction, delimited by special tokens.
//!
//! Layout, fixed and fingerprinted in checkpoints:
//! `<ct> CT </ct> <pet> PET </pet> <template> template </template> instruction`.

use std::ops::Range;

use petct_core::prep::Gender;
use petct_core::report::TemplateDictionary;
use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::sampler::{VisualModality, VisualTokenBlock};
use crate::vocab::{Vocab, CT_CLOSE, CT_OPEN, PET_CLOSE, PET_OPEN, TEMPLATE_CLOSE, TEMPLATE_OPEN};

pub const INSTRUCTION: &str = include_str!("../assets/instruction.txt");
pub const INSTRUCTION_VERSION: &str = "instruction-v1";
pub const PROMPT_ORDER: &str = "ct,pet,template,instruction";
pub const MARKER_TOKENS: usize = 6;

/// One position of the assembled decoder input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PromptSlot {
    Token(u32),
    Visual(VisualModality, u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PromptLayout {
    pub slots: Vec<PromptSlot>,
    pub template_span: Range<usize>,
    pub warnings: Vec<String>,
}

impl PromptLayout {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Text token ids with `None` at visual positions.
    pub fn token_ids(&self) -> Vec<Option<u32>> {
        self.slots
            .iter()
            .map(|s| match s {
                PromptSlot::Token(t) => Some(*t),
                PromptSlot::Visual(..) => None,
            })
            .collect()
    }
}

/// Builds the slot sequence. The template is cut from its tail when the
/// whole prompt would exceed `limit`.
pub fn build_layout(
    ct_len: usize,
    pet_len: usize,
    template: &str,
    instruction: &str,
    vocab: &Vocab,
    limit: usize,
) -> Result<PromptLayout> {
    let mut template_ids = vocab.tokenize(template);
    let instruction_ids = vocab.tokenize(instruction);
    let fixed = ct_len + pet_len + MARKER_TOKENS + instruction_ids.len();
    if fixed > limit {
        return Err(ModelError::PromptOverflow { needed: fixed, limit });
    }
    let mut warnings = Vec::new();
    if fixed + template_ids.len() > limit {
        let keep = limit - fixed;
        let msg = format!("template truncated from {} to {keep} tokens", template_ids.len());
        log::warn!("{msg}");
        warnings.push(msg);
        template_ids.truncate(keep);
    }
    let tok = |s: &str| PromptSlot::Token(vocab.special(s));
    let mut slots = Vec::with_capacity(fixed + template_ids.len());
    slots.push(tok(CT_OPEN));
    slots.extend((0..ct_len as u32).map(|i| PromptSlot::Visual(VisualModality::Ct, i)));
    slots.push(tok(CT_CLOSE));
    slots.push(tok(PET_OPEN));
    slots.extend((0..pet_len as u32).map(|i| PromptSlot::Visual(VisualModality::Pet, i)));
    slots.push(tok(PET_CLOSE));
    slots.push(tok(TEMPLATE_OPEN));
    let start = slots.len();
    slots.extend(template_ids.into_iter().map(PromptSlot::Token));
    let template_span = start..slots.len();
    slots.push(tok(TEMPLATE_CLOSE));
    slots.extend(instruction_ids.into_iter().map(PromptSlot::Token));
    Ok(PromptLayout { slots, template_span, warnings })
}

/// Decoder input for one case, before embedding.
#[derive(Clone, Debug)]
pub struct PromptBundle {
    pub ct: VisualTokenBlock,
    pub pet: VisualTokenBlock,
    pub template_text: String,
    pub instruction_text: String,
    pub layout: PromptLayout,
}

#[allow(clippy::too_many_arguments)]
pub fn assemble_prompt(
    ct: VisualTokenBlock,
    pet: VisualTokenBlock,
    center_id: u8,
    gender: Gender,
    templates: &TemplateDictionary,
    instruction: &str,
    vocab: &Vocab,
    limit: usize,
) -> Result<PromptBundle> {
    if ct.modality != VisualModality::Ct || pet.modality != VisualModality::Pet {
        return Err(ModelError::InvalidInput("visual blocks passed in the wrong order".into()));
    }
    let template = templates.lookup(center_id, gender)?.to_string();
    let layout = build_layout(ct.len(), pet.len(), &template, instruction, vocab, limit)?;
    Ok(PromptBundle { ct, pet, template_text: template, instruction_text: instruction.to_string(), layout })
}

/// Human-readable rendering of a layout for audit dumps.
pub fn render_layout(layout: &PromptLayout, vocab: &Vocab) -> String {
    let mut out = String::new();
    let mut run: Option<(VisualModality, usize)> = None;
    let flush = |out: &mut String, run: &mut Option<(VisualModality, usize)>| {
        if let Some((m, n)) = run.take() {
            out.push_str(&format!("[{} x {n}]", m.name()));
        }
    };
    let mut text_ids = Vec::new();
    for s in &layout.slots {
        match *s {
            PromptSlot::Visual(m, _) => {
                if !text_ids.is_empty() {
                    out.push_str(&vocab.detokenize(&std::mem::take(&mut text_ids)));
                }
                match &mut run {
                    Some((rm, n)) if *rm == m => *n += 1,
                    _ => {
                        flush(&mut out, &mut run);
                        run = Some((m, 1));
                    }
                }
            }
            PromptSlot::Token(t) => {
                flush(&mut out, &mut run);
                text_ids.push(t);
            }
        }
    }
    flush(&mut out, &mut run);
    out.push_str(&vocab.detokenize(&text_ids));
    out
}
