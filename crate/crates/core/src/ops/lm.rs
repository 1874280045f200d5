//! Add-one smoothed bigram model for the text perplexity statistic.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ops::text::words;

pub const START: &str = "<s>";
pub const UNKNOWN: &str = "<unk>";

/// Bigram counts with add-one smoothing:
/// `p(w | v) = (count(v, w) + 1) / (count(v) + V)`.
///
/// `count(v)` is the number of bigrams with context `v`. `V` counts the
/// predictable types: every word seen in the counts plus the unknown
/// sentinel. The start sentinel only appears as a context and is not part
/// of `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramLanguageModel {
    bigrams: HashMap<(String, String), u64>,
    context_counts: HashMap<String, u64>,
    vocab: BTreeSet<String>,
}

impl BigramLanguageModel {
    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, S, u64)>,
        S: AsRef<str>,
    {
        let mut bigrams = HashMap::new();
        let mut context_counts = HashMap::new();
        let mut vocab = BTreeSet::new();
        vocab.insert(UNKNOWN.to_owned());
        for (prev, word, n) in counts {
            let prev = canonical(prev.as_ref());
            let word = canonical(word.as_ref());
            if prev != START {
                vocab.insert(prev.clone());
            }
            vocab.insert(word.clone());
            *context_counts.entry(prev.clone()).or_insert(0) += n;
            *bigrams.entry((prev, word)).or_insert(0) += n;
        }
        Self {
            bigrams,
            context_counts,
            vocab,
        }
    }

    /// Adds words that never occur in the counts to the vocabulary.
    pub fn with_vocabulary<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for w in extra {
            let w = canonical(w.as_ref());
            if w != START {
                self.vocab.insert(w);
            }
        }
        self
    }

    /// Parses `prev<TAB>word<TAB>count` lines. Blank lines and `#` comments
    /// are skipped.
    pub fn parse(content: &str) -> Result<Self> {
        let mut counts = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [prev, word, n] = fields[..] else {
                return Err(Error::Invalid(format!("line {}: expected 3 tab-separated fields", i + 1)));
            };
            let n: u64 = n
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("line {}: bad count {n:?}", i + 1)))?;
            counts.push((prev.to_owned(), word.to_owned(), n));
        }
        Ok(Self::from_counts(counts))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let asset_err = |reason: String| Error::Asset {
            path: path.to_owned(),
            reason,
        };
        let content = std::fs::read_to_string(path).map_err(|e| asset_err(e.to_string()))?;
        Self::parse(&content).map_err(|e| asset_err(e.to_string()))
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn prob(&self, prev: &str, word: &str) -> f64 {
        let key = (prev.to_owned(), word.to_owned());
        let joint = self.bigrams.get(&key).copied().unwrap_or(0);
        let ctx = self.context_counts.get(prev).copied().unwrap_or(0);
        (joint + 1) as f64 / (ctx + self.vocab.len() as u64) as f64
    }

    /// Maps a raw token to its vocabulary entry.
    pub fn lookup<'a>(&'a self, token: &str) -> &'a str {
        let lower = token.to_lowercase();
        self.vocab
            .get(lower.as_str())
            .map(String::as_str)
            .unwrap_or(UNKNOWN)
    }
}

fn canonical(token: &str) -> String {
    if token == START || token == UNKNOWN {
        token.to_owned()
    } else {
        token.to_lowercase()
    }
}

/// `exp(-(1/T) * sum ln p_t)`.
pub fn perplexity_from_probs<I: IntoIterator<Item = f64>>(probs: I) -> Result<f64> {
    let (sum, t) = probs.into_iter().fold((0.0f64, 0usize), |(s, t), p| (s + p.ln(), t + 1));
    if t == 0 {
        return Err(Error::UndefinedPerplexity);
    }
    Ok((-sum / t as f64).exp())
}

/// Perplexity of whitespace tokens under `lm`, first token conditioned on
/// the start sentinel.
pub fn perplexity(text: &str, lm: &BigramLanguageModel) -> Result<f64> {
    let mut prev = START;
    let probs: Vec<f64> = words(text)
        .map(|w| {
            let w = lm.lookup(w);
            let p = lm.prob(prev, w);
            prev = w;
            p
        })
        .collect();
    perplexity_from_probs(probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_half_gives_two() {
        assert!((perplexity_from_probs([0.5; 4]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_probabilities() {
        // exp(ln 8 / 2) = sqrt(8)
        let ppl = perplexity_from_probs([0.5, 0.25]).unwrap();
        assert!((ppl - 8f64.sqrt()).abs() < 1e-12);
        assert!((ppl - 2.82843).abs() < 1e-5);
    }

    #[test]
    fn smoothing_formula() {
        let lm = BigramLanguageModel::from_counts([("a", "a", 3), ("a", "b", 1)]);
        assert_eq!(lm.vocab_size(), 3);
        assert!((lm.prob("a", "a") - 4.0 / 7.0).abs() < 1e-15);
        assert!((lm.prob("a", UNKNOWN) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn empty_counts_model_is_uniform() {
        // V = {a, <unk>} so every conditional is 1/2.
        let lm = BigramLanguageModel::from_counts(Vec::<(&str, &str, u64)>::new()).with_vocabulary(["a"]);
        assert!((perplexity("a a A zzz", &lm).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_tokens_is_undefined() {
        let lm = BigramLanguageModel::from_counts([("a", "b", 1)]);
        assert!(matches!(perplexity("  ", &lm), Err(Error::UndefinedPerplexity)));
    }

    #[test]
    fn counts_file_form() {
        let lm = BigramLanguageModel::parse("<s>\tthe\t2\nthe\tcat\t1\n# c\n").unwrap();
        assert_eq!(lm.vocab_size(), 3);
        assert!((lm.prob(START, "the") - 3.0 / 5.0).abs() < 1e-15);
        assert!(BigramLanguageModel::parse("a\tb\n").is_err());
        assert!(BigramLanguageModel::parse("a\tb\tx\n").is_err());
    }

    #[test]
    fn perplexity_is_at_least_one() {
        let lm = BigramLanguageModel::from_counts([("<s>", "a", 100), ("a", "a", 100)]);
        assert!(perplexity("a a a", &lm).unwrap() >= 1.0);
    }
}
