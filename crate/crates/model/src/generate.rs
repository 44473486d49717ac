//! Autoregressive decoding: repetition penalty, temperature, nucleus
//! filtering, greedy mode and stop-token handling.

use petct_core::config::GenerationConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, Result};
use crate::vocab::Vocab;

/// Anything that yields next-token logits given the tokens generated so far.
pub trait LogitsSource {
    fn next_logits(&mut self, generated: &[u32]) -> Result<Vec<f32>>;
}

impl<F: FnMut(&[u32]) -> Vec<f32>> LogitsSource for F {
    fn next_logits(&mut self, generated: &[u32]) -> Result<Vec<f32>> {
        Ok(self(generated))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationOutput {
    /// Generated ids, stop token excluded.
    pub token_ids: Vec<u32>,
    pub text: String,
    /// True when decoding ended on the stop token rather than the length cap.
    pub stopped: bool,
}

/// Divides positive and multiplies negative logits of already generated tokens.
pub fn apply_repetition_penalty(logits: &mut [f64], history: &[u32], penalty: f64) {
    if penalty == 1.0 {
        return;
    }
    let mut seen = vec![false; logits.len()];
    for &t in history {
        if let Some(s) = seen.get_mut(t as usize) {
            *s = true;
        }
    }
    for (l, s) in logits.iter_mut().zip(seen) {
        if s {
            *l = if *l > 0.0 { *l / penalty } else { *l * penalty };
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Smallest highest-probability set whose mass reaches `top_p`, renormalized.
/// Ties are broken by token id.
pub fn nucleus(probs: &[f64], top_p: f64) -> Vec<(u32, f64)> {
    let mut order: Vec<(u32, f64)> = probs.iter().enumerate().map(|(i, &p)| (i as u32, p)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut mass = 0.0;
    let mut keep = 0;
    for (_, p) in &order {
        mass += p;
        keep += 1;
        if mass >= top_p {
            break;
        }
    }
    order.truncate(keep);
    let z: f64 = order.iter().map(|x| x.1).sum();
    order.into_iter().map(|(i, p)| (i, p / z)).collect()
}

pub fn argmax(xs: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best as u32
}

/// Picks the next token from raw logits.
pub fn choose_token(logits: &[f32], history: &[u32], cfg: &GenerationConfig, rng: &mut ChaCha8Rng) -> u32 {
    let mut l: Vec<f64> = logits.iter().map(|&x| x as f64).collect();
    apply_repetition_penalty(&mut l, history, cfg.repetition_penalty);
    if cfg.greedy {
        return argmax(&l);
    }
    l.iter_mut().for_each(|x| *x /= cfg.temperature);
    let kept = nucleus(&softmax(&l), cfg.top_p);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(id, p) in &kept {
        acc += p;
        if u < acc {
            return id;
        }
    }
    kept.last().expect("nucleus is never empty").0
}

/// Decodes until `stop_id` or `cfg.max_new_tokens` generated tokens.
pub fn generate_ids(
    source: &mut dyn LogitsSource,
    cfg: &GenerationConfig,
    stop_id: u32,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<u32>, bool)> {
    let mut out = Vec::new();
    while out.len() < cfg.max_new_tokens {
        let logits = source.next_logits(&out)?;
        if logits.is_empty() {
            return Err(ModelError::InvalidInput("logits source returned no logits".into()));
        }
        let t = choose_token(&logits, &out, cfg, rng);
        if t == stop_id {
            return Ok((out, true));
        }
        out.push(t);
    }
    Ok((out, false))
}

pub fn generate_report(source: &mut dyn LogitsSource, vocab: &Vocab, cfg: &GenerationConfig) -> Result<GenerationOutput> {
    cfg.validate()?;
    let stop = vocab
        .id(&cfg.stop_token)
        .ok_or_else(|| ModelError::InvalidInput(format!("stop token {:?} not in vocabulary", cfg.stop_token)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (token_ids, stopped) = generate_ids(source, cfg, stop, &mut rng)?;
    let text = vocab.detokenize(&token_ids).replace(cfg.stop_token.as_str(), "");
    Ok(GenerationOutput { token_ids, text, stopped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::END_OF_REPORT;

    fn vocab() -> Vocab {
        Vocab::build(&[]).with_special_tokens()
    }

    #[test]
    fn immediate_stop_gives_empty_report() {
        let v = vocab();
        let stop = v.special(END_OF_REPORT) as usize;
        let mut src = |_: &[u32]| {
            let mut l = vec![0.0f32; v.len()];
            l[stop] = 50.0;
            l
        };
        let out = generate_report(&mut src, &v, &GenerationConfig { greedy: true, ..Default::default() }).unwrap();
        assert_eq!(out.text, "");
        assert!(out.stopped);
    }

    #[test]
    fn cap_is_exact_without_stop() {
        let v = vocab();
        let stop = v.special(END_OF_REPORT) as usize;
        let liver = v.id("liver").unwrap() as usize;
        let mut src = |_: &[u32]| {
            let mut l = vec![0.0f32; v.len()];
            l[stop] = -1e9;
            l[liver] = 5.0;
            l
        };
        let out = generate_report(&mut src, &v, &GenerationConfig::default()).unwrap();
        assert_eq!(out.token_ids.len(), 1024);
        assert!(!out.stopped);
        assert!(!out.text.contains(END_OF_REPORT));
    }

    #[test]
    fn repetition_penalty_signs() {
        let mut l = vec![2.0, -2.0, 1.0];
        apply_repetition_penalty(&mut l, &[0, 1], 2.0);
        assert_eq!(l, vec![1.0, -4.0, 1.0]);
    }

    #[test]
    fn nucleus_keeps_minimal_prefix() {
        let kept = nucleus(&[0.5, 0.3, 0.2], 0.7);
        assert_eq!(kept.iter().map(|k| k.0).collect::<Vec<_>>(), vec![0, 1]);
        assert!((kept[0].1 - 0.625).abs() < 1e-12);
        assert_eq!(nucleus(&[0.1, 0.9], 0.05).len(), 1);
    }

    #[test]
    fn ancestral_sampling_matches_joint_distribution() {
        // Markov model over three tokens; the next distribution depends on the last token.
        let table = [[0.2f32, 1.0, -0.5], [1.5, 0.0, 0.3], [-1.0, 0.4, 0.9]];
        let first = [0.3f32, -0.2, 0.8];
        let mut src = |h: &[u32]| match h.last() {
            None => first.to_vec(),
            Some(&t) => table[t as usize].to_vec(),
        };
        let cfg = GenerationConfig { temperature: 1.0, top_p: 1.0, repetition_penalty: 1.0, max_new_tokens: 2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut counts = [[0usize; 3]; 3];
        for _ in 0..n {
            let (ids, stopped) = generate_ids(&mut src, &cfg, 3, &mut rng).unwrap();
            assert!(!stopped);
            counts[ids[0] as usize][ids[1] as usize] += 1;
        }
        let p = |l: &[f32]| softmax(&l.iter().map(|&x| x as f64).collect::<Vec<_>>());
        let p0 = p(&first);
        let mut tv = 0.0;
        for a in 0..3 {
            let p1 = p(&table[a]);
            for b in 0..3 {
                tv += (counts[a][b] as f64 / n as f64 - p0[a] * p1[b]).abs();
            }
        }
        assert!(tv / 2.0 < 1e-2, "total variation {}", tv / 2.0);
    }
}
