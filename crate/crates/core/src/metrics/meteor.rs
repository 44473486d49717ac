use std::collections::HashMap;

use super::MetricError;

pub const ALPHA: f64 = 0.9;
pub const BETA: f64 = 3.0;
pub const GAMMA: f64 = 0.5;

/// Exact-match alignment: hypothesis words are visited from the end and each
/// takes the last still-unmatched equal reference word. Returns
/// `(hyp_index, ref_index)` pairs sorted by hypothesis index.
pub fn align<T: AsRef<str>>(hyp: &[T], reference: &[T]) -> Vec<(usize, usize)> {
    let mut slots: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, w) in reference.iter().enumerate() {
        slots.entry(w.as_ref()).or_default().push(j);
    }
    let mut out: Vec<(usize, usize)> = hyp
        .iter()
        .enumerate()
        .rev()
        .filter_map(|(i, w)| slots.get_mut(w.as_ref()).and_then(Vec::pop).map(|j| (i, j)))
        .collect();
    out.reverse();
    out
}

fn chunks(alignment: &[(usize, usize)]) -> usize {
    if alignment.is_empty() {
        return 0;
    }
    1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// Sentence METEOR with exact matching only.
pub fn meteor<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    let a = align(candidate, reference);
    let m = a.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let p = m / candidate.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let frag = chunks(&a) as f64 / m;
    fmean * (1.0 - GAMMA * frag.powf(BETA))
}

/// Mean sentence METEOR over a corpus.
pub fn corpus_meteor<T: AsRef<str>>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<f64, MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch(candidates.len(), references.len()));
    }
    if candidates.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let s: f64 = candidates.iter().zip(references).map(|(c, r)| meteor(c, r)).sum();
    Ok(s / candidates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_single_chunk() {
        let s = ["a", "b", "c", "d", "e"];
        let m = 5.0f64;
        assert!((meteor(&s, &s) - (1.0 - 0.5 * (1.0 / m).powi(3))).abs() < 1e-12);
    }

    #[test]
    fn zero_matches() {
        assert_eq!(meteor(&["a"], &["b"]), 0.0);
        assert_eq!(meteor::<&str>(&[], &["b"]), 0.0);
    }

    #[test]
    fn scrambled_is_lower() {
        let r = ["a", "b", "c", "d", "e", "f"];
        let h = ["f", "d", "b", "e", "c", "a"];
        assert_eq!(chunks(&align(&h, &r)), 6);
        assert!(meteor(&h, &r) < meteor(&r, &r));
    }

    #[test]
    fn repeated_words_take_last_reference_slot() {
        assert_eq!(align(&["a", "a"], &["a", "b", "a"]), vec![(0, 0), (1, 2)]);
        assert_eq!(align(&["a"], &["a", "b", "a"]), vec![(0, 2)]);
    }
}
