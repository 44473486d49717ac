//! Training loop: warmup schedule, masked report loss, gradient
//! accumulation and AdamW over the trainable parameter groups.

use candle_core::backprop::GradStore;
use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use petct_core::config::TrainConfig;
use petct_core::{Execution, VolumeGrid};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, Result};
use crate::fusion::{PromptBundle, PromptLayout};
use crate::model::ReportModel;
use crate::sampler::VisualModality;
use crate::vocab::{Vocab, END_OF_REPORT};

/// `base_lr · min(1, step / warmup_steps)`.
pub fn lr_at_step(step: usize, cfg: &TrainConfig) -> f64 {
    if cfg.warmup_steps == 0 {
        return cfg.base_lr;
    }
    cfg.base_lr * (step as f64 / cfg.warmup_steps as f64).min(1.0)
}

/// Report tokens followed by the stop token.
pub fn make_target(vocab: &Vocab, report: &str) -> Result<Vec<u32>> {
    let mut ids = vocab.tokenize(report);
    if ids.is_empty() {
        return Err(ModelError::Data("empty target report".into()));
    }
    ids.push(vocab.special(END_OF_REPORT));
    Ok(ids)
}

/// One training case with cached encoder features.
#[derive(Clone, Debug)]
pub struct TrainExample {
    pub case_id: String,
    pub ct_features: Tensor,
    pub pet_features: Tensor,
    pub layout: PromptLayout,
    pub target: Vec<u32>,
}

impl TrainExample {
    /// Encodes both prepared volumes and lays out the prompt for `template`.
    pub fn from_volumes(
        model: &ReportModel,
        case_id: &str,
        ct: &VolumeGrid,
        pet: &VolumeGrid,
        template: &str,
        report: &str,
        exec: Execution,
    ) -> Result<Self> {
        Ok(TrainExample {
            case_id: case_id.to_string(),
            ct_features: model.encode(ct, exec)?,
            pet_features: model.encode(pet, exec)?,
            layout: model.prompt_layout(template)?,
            target: make_target(model.vocab(), report)?,
        })
    }

    /// Prompt bundle for generation from the cached features.
    pub fn bundle(&self, model: &ReportModel) -> Result<PromptBundle> {
        Ok(PromptBundle {
            ct: model.visual_tokens(VisualModality::Ct, &self.ct_features)?,
            pet: model.visual_tokens(VisualModality::Pet, &self.pet_features)?,
            template_text: String::new(),
            instruction_text: String::new(),
            layout: self.layout.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    /// Names of parameters whose gradient reached the optimizer in this step.
    pub grad_params: Vec<String>,
}

pub struct Trainer<'m> {
    model: &'m ReportModel,
    opt: AdamW,
    cfg: TrainConfig,
    step: usize,
    rng: ChaCha8Rng,
}

impl<'m> Trainer<'m> {
    pub fn new(model: &'m ReportModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = ParamsAdamW {
            lr: lr_at_step(0, &cfg),
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        };
        let opt = AdamW::new(model.store().trainable_vars(), params)?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Trainer { model, opt, cfg, step: 0, rng })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    fn example_loss(&mut self, ex: &TrainExample) -> Result<Tensor> {
        let stop = self.model.stop_id();
        if ex.target.last() != Some(&stop) || ex.target.len() < 2 {
            return Err(ModelError::Data(format!("case {}: target report is empty or unterminated", ex.case_id)));
        }
        let ct = self.model.visual_tokens(VisualModality::Ct, &ex.ct_features)?;
        let pet = self.model.visual_tokens(VisualModality::Pet, &ex.pet_features)?;
        let prompt = self.model.embed_layout(&ex.layout, &ct, &pet)?;
        self.model.sequence_loss(&prompt, &ex.target, Some(&mut self.rng))
    }

    /// One optimizer update over `batch`, split into micro-batches whose
    /// gradients are summed. Returns the mean per-case loss.
    pub fn training_step(&mut self, batch: &[&TrainExample]) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(ModelError::Data("empty batch".into()));
        }
        let lr = lr_at_step(self.step, &self.cfg);
        self.opt.set_learning_rate(lr);
        let n = batch.len() as f64;
        let mut total: Option<GradStore> = None;
        let mut loss_sum = 0.0;
        for micro in batch.chunks(self.cfg.micro_batch) {
            let mut acc: Option<Tensor> = None;
            for ex in micro {
                let l = self.example_loss(ex)?;
                acc = Some(match acc {
                    Some(a) => (a + l)?,
                    None => l,
                });
            }
            let loss = (acc.expect("micro-batch is non-empty") / n)?;
            loss_sum += loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            let grads = loss.backward()?;
            total = Some(match total {
                None => grads,
                Some(mut t) => {
                    for var in self.model.store().trainable_vars() {
                        if let Some(g) = grads.get(var.as_tensor()) {
                            let sum = match t.get(var.as_tensor()) {
                                Some(prev) => (prev + g)?,
                                None => g.clone(),
                            };
                            t.insert(var.as_tensor(), sum);
                        }
                    }
                    t
                }
            });
        }
        let grads = total.expect("batch is non-empty");
        // The reverse pass also materializes operand gradients for frozen
        // leaves; only gradients handed to the optimizer count here.
        let grad_params = self
            .model
            .store()
            .trainable()
            .filter(|(_, v)| grads.get(v.as_tensor()).is_some())
            .map(|(n, _)| n.to_string())
            .collect();
        self.opt.step(&grads)?;
        self.step += 1;
        Ok(StepReport { step: self.step, lr, loss: loss_sum, grad_params })
    }

    /// Runs epochs of shuffled batches of `effective_batch` cases until the
    /// epochs or `max_steps` run out.
    pub fn train(&mut self, examples: &[TrainExample], mut on_step: impl FnMut(&StepReport)) -> Result<Vec<f64>> {
        if examples.is_empty() {
            return Err(ModelError::Data("no training examples".into()));
        }
        let mut losses = Vec::new();
        let mut order: Vec<usize> = (0..examples.len()).collect();
        'epochs: for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.clone().chunks(self.cfg.effective_batch) {
                if self.cfg.max_steps > 0 && self.step >= self.cfg.max_steps {
                    break 'epochs;
                }
                let batch: Vec<&TrainExample> = chunk.iter().map(|&i| &examples[i]).collect();
                let r = self.training_step(&batch)?;
                on_step(&r);
                losses.push(r.loss);
            }
        }
        Ok(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at_step(0, &cfg), 0.0);
        assert!((lr_at_step(50, &cfg) - 2.5e-5).abs() < 1e-20);
        assert_eq!(lr_at_step(100, &cfg), 5e-5);
        assert_eq!(lr_at_step(10_000, &cfg), 5e-5);
    }

    #[test]
    fn empty_report_is_a_data_error() {
        let v = crate::model::default_vocab();
        assert!(matches!(make_target(&v, "   "), Err(ModelError::Data(_))));
        assert_eq!(make_target(&v, "liver unremarkable.").unwrap().len(), 4);
    }
}
