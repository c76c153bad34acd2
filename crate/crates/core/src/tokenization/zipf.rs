//! Rank/frequency statistics for diagnosing long-tail token distributions.

use std::collections::HashMap;

use crate::tokenization::TokenSequence;

#[derive(Clone, Debug)]
pub struct ZipfStats {
    /// Distinct tokens with their corpus frequencies, most frequent first,
    /// ties in lexicographic order. Rank is the 1-based position.
    ranked: Vec<(String, u64)>,
}

impl ZipfStats {
    pub fn from_corpus(corpus: &[TokenSequence]) -> Self {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for seq in corpus {
            for tok in seq {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts
            .into_iter()
            .map(|(t, c)| (t.to_string(), c))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ZipfStats { ranked }
    }

    pub fn ranked(&self) -> &[(String, u64)] {
        &self.ranked
    }

    pub fn distinct_tokens(&self) -> usize {
        self.ranked.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.ranked.iter().map(|(_, c)| c).sum()
    }

    /// Least-squares fit of ln f against -ln rank with the slope pinned to
    /// -1, which reduces to exp(mean(ln f + ln rank)).
    pub fn fitted_c(&self) -> f64 {
        if self.ranked.is_empty() {
            return 0.0;
        }
        let mean = self
            .ranked
            .iter()
            .enumerate()
            .map(|(i, (_, f))| (*f as f64).ln() + ((i + 1) as f64).ln())
            .sum::<f64>()
            / self.ranked.len() as f64;
        mean.exp()
    }

    /// Fraction of distinct tokens with frequency strictly below `threshold`.
    pub fn low_freq_fraction(&self, threshold: u64) -> f64 {
        if self.ranked.is_empty() {
            return 0.0;
        }
        let low = self.ranked.iter().filter(|(_, f)| *f < threshold).count();
        low as f64 / self.ranked.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_constant_from_exact_zipf_counts() {
        // Token i appears exactly 2520/i times; 2520 is divisible by 1..=10.
        const C: u64 = 2520;
        let mut corpus: Vec<TokenSequence> = Vec::new();
        for i in 1..=10u64 {
            for _ in 0..C / i {
                corpus.push(vec![format!("t{i:02}")]);
            }
        }
        let stats = ZipfStats::from_corpus(&corpus);
        assert_eq!(stats.distinct_tokens(), 10);
        assert!((stats.fitted_c() - C as f64).abs() < 1e-6);
    }

    #[test]
    fn ranking_is_frequency_then_lexicographic() {
        let corpus = vec![
            vec!["b".to_string(), "b".to_string(), "a".to_string()],
            vec!["c".to_string(), "a".to_string()],
        ];
        let stats = ZipfStats::from_corpus(&corpus);
        let names: Vec<&str> = stats.ranked().iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(names, vec!["a", "b", "c"]);
        assert_eq!(stats.total_tokens(), 5);
    }

    #[test]
    fn low_freq_fraction_counts_strictly_below() {
        let corpus = vec![
            vec!["x".to_string(); 5],
            vec!["y".to_string(); 4],
            vec!["z".to_string(); 1],
        ];
        let stats = ZipfStats::from_corpus(&corpus);
        assert_eq!(stats.low_freq_fraction(5), 2.0 / 3.0);
        assert_eq!(stats.low_freq_fraction(1), 0.0);
        assert_eq!(stats.low_freq_fraction(100), 1.0);
    }

    #[test]
    fn empty_corpus_degenerates_to_zero() {
        let stats = ZipfStats::from_corpus(&[]);
        assert_eq!(stats.distinct_tokens(), 0);
        assert_eq!(stats.fitted_c(), 0.0);
        assert_eq!(stats.low_freq_fraction(5), 0.0);
    }
}
