use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::text::token_frequencies;

/// Shannon entropy (nats) of the lowercased whitespace-token distribution.
pub fn word_entropy<'a, I>(texts: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a str>,
{
    let freq = token_frequencies(texts);
    entropy_of_counts(freq.values().copied())
}

pub fn entropy_of_counts<I: IntoIterator<Item = u64>>(counts: I) -> Result<f64> {
    // summed in sorted order so the float result ignores input order
    let mut counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    counts.sort_unstable();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Invalid("entropy is undefined for zero tokens".into()));
    }
    let total = total as f64;
    Ok(counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCount {
    pub token: String,
    pub count: u64,
}

/// Entropy plus the most frequent tokens, for word-cloud style rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub pool_id: String,
    pub entropy_nats: f64,
    pub tokens: u64,
    pub distinct_tokens: usize,
    pub top_tokens: Vec<TokenCount>,
}

/// Top tokens are ordered by count, then token.
pub fn diversity_report<'a, I>(pool_id: impl Into<String>, texts: I, top_n: usize) -> Result<DiversityReport>
where
    I: IntoIterator<Item = &'a str>,
{
    let freq = token_frequencies(texts);
    let entropy_nats = entropy_of_counts(freq.values().copied())?;
    let mut top: Vec<TokenCount> = freq
        .into_iter()
        .map(|(token, count)| TokenCount { token, count })
        .collect();
    let distinct_tokens = top.len();
    let tokens = top.iter().map(|t| t.count).sum();
    top.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.token.cmp(&b.token)));
    top.truncate(top_n);
    Ok(DiversityReport {
        pool_id: pool_id.into(),
        entropy_nats,
        tokens,
        distinct_tokens,
        top_tokens: top,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(word_entropy(["a a a"]).unwrap(), 0.0);
        assert!((word_entropy(["a b"]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let h = word_entropy(["a b", "A c"]).unwrap();
        let expected = -(0.5f64 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
        assert!((h - expected).abs() < 1e-12);
        assert!((h - 1.03972).abs() < 1e-5);
        assert!(word_entropy(["", "  "]).is_err());
    }

    #[test]
    fn report_top_tokens() {
        let r = diversity_report("p", ["b a b", "c a b"], 2).unwrap();
        assert_eq!(r.tokens, 6);
        assert_eq!(r.distinct_tokens, 3);
        let top: Vec<_> = r.top_tokens.iter().map(|t| (t.token.as_str(), t.count)).collect();
        assert_eq!(top, [("b", 3), ("a", 2)]);
    }

    proptest! {
        #[test]
        fn bounded_by_log_distinct(counts in prop::collection::vec(1u64..50, 1..30)) {
            let h = entropy_of_counts(counts.iter().copied()).unwrap();
            let max = (counts.len() as f64).ln();
            prop_assert!(h >= 0.0 && h <= max + 1e-12);
            let uniform = entropy_of_counts(std::iter::repeat_n(7, counts.len())).unwrap();
            prop_assert!((uniform - max).abs() < 1e-12);
            prop_assert!(h <= uniform + 1e-12);
        }
    }
}
