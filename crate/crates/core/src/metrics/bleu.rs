use std::collections::HashMap;

use super::MetricError;

/// Corpus-level n-gram statistics for BLEU up to order `max_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BleuStats {
    /// Clipped matches per order.
    pub matches: Vec<u64>,
    /// Candidate n-grams per order.
    pub totals: Vec<u64>,
    pub candidate_len: u64,
    pub reference_len: u64,
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

impl BleuStats {
    pub fn collect<T: AsRef<str>>(
        candidates: &[Vec<T>],
        references: &[Vec<T>],
        max_n: usize,
    ) -> Result<Self, MetricError> {
        if !(1..=4).contains(&max_n) {
            return Err(MetricError::Invalid(format!("BLEU order {max_n} outside 1..=4")));
        }
        if candidates.len() != references.len() {
            return Err(MetricError::LengthMismatch(candidates.len(), references.len()));
        }
        if candidates.is_empty() {
            return Err(MetricError::EmptyCorpus);
        }
        let mut s = BleuStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            candidate_len: 0,
            reference_len: 0,
        };
        for (c, r) in candidates.iter().zip(references) {
            s.candidate_len += c.len() as u64;
            s.reference_len += r.len() as u64;
            for n in 1..=max_n {
                let rc = ngram_counts(r, n);
                for (g, k) in ngram_counts(c, n) {
                    s.matches[n - 1] += k.min(rc.get(&g).copied().unwrap_or(0));
                    s.totals[n - 1] += k;
                }
            }
        }
        Ok(s)
    }

    /// BLEU on a 0..=100 scale with uniform weights over the orders that have
    /// at least one candidate n-gram.
    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 {
            return if self.reference_len == 0 { 100.0 } else { 0.0 };
        }
        let used: Vec<f64> = self
            .matches
            .iter()
            .zip(&self.totals)
            .filter(|(_, &t)| t > 0)
            .map(|(&m, &t)| m as f64 / t as f64)
            .collect();
        if used.is_empty() || used.iter().any(|&p| p == 0.0) {
            return 0.0;
        }
        let log_mean = used.iter().map(|p| p.ln()).sum::<f64>() / used.len() as f64;
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        100.0 * bp * log_mean.exp()
    }
}

pub fn corpus_bleu<T: AsRef<str>>(
    candidates: &[Vec<T>],
    references: &[Vec<T>],
    max_n: usize,
) -> Result<f64, MetricError> {
    Ok(BleuStats::collect(candidates, references, max_n)?.score())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identity_is_100() {
        let c = vec![toks("a b c d e"), toks("x y")];
        for n in 1..=4 {
            assert!((corpus_bleu(&c, &c, n).unwrap() - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn no_overlap_is_zero() {
        assert_eq!(corpus_bleu(&[toks("a b")], &[toks("c d")], 4).unwrap(), 0.0);
    }

    #[test]
    fn short_candidate_brevity() {
        let b = corpus_bleu(&[toks("the cat sat")], &[toks("the cat sat down")], 4).unwrap();
        assert!((b - 100.0 * (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let e: Vec<Vec<String>> = vec![];
        assert_eq!(corpus_bleu(&e, &e, 4), Err(MetricError::EmptyCorpus));
        assert_eq!(
            corpus_bleu(&[toks("a")], &[toks("a"), toks("b")], 4),
            Err(MetricError::LengthMismatch(1, 2))
        );
    }
}
