use super::MetricError;

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with beta = 1. Two empty sequences score 1.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let l = lcs_len(candidate, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Mean sentence-level ROUGE-L.
pub fn corpus_rouge_l<T: PartialEq>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<f64, MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch(candidates.len(), references.len()));
    }
    if candidates.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let s: f64 = candidates.iter().zip(references).map(|(c, r)| rouge_l(c, r)).sum();
    Ok(s / candidates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let c = ["a", "b", "c", "d"];
        let r = ["a", "c", "d"];
        assert_eq!(lcs_len(&c, &r), 3);
        assert!((rouge_l(&c, &r) - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(rouge_l(&c, &c), 1.0);
        assert_eq!(rouge_l(&["x"], &["y"]), 0.0);
        assert_eq!(rouge_l::<&str>(&[], &[]), 1.0);
        assert_eq!(rouge_l(&[], &["y"]), 0.0);
    }
}
