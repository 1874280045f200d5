//! Per-sample text statistics. Every function here is pure.
//!
//! Conventions:
//! - lengths count Unicode scalar values;
//! - words are whitespace-separated tokens;
//! - n-gram statistics run on NFC-normalized, lowercased text, with
//!   whitespace kept in character n-grams;
//! - ratios of an empty input are 0.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub fn normalize(text: &str) -> String {
    text.nfc().collect::<String>().to_lowercase()
}

pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

/// Alphanumeric scalars over all scalars.
pub fn alphanumeric_ratio(text: &str) -> f64 {
    ratio(text.chars(), |c| c.is_alphanumeric())
}

/// Scalars that are neither alphanumeric nor whitespace, over all scalars.
pub fn special_char_ratio(text: &str) -> f64 {
    ratio(text.chars(), |c| !c.is_alphanumeric() && !c.is_whitespace())
}

fn ratio<I: Iterator<Item = char>>(chars: I, pred: impl Fn(char) -> bool) -> f64 {
    let (hits, total) = chars.fold((0usize, 0usize), |(h, t), c| (h + pred(c) as usize, t + 1));
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// `1 - distinct/total` over the sliding n-grams of `items`.
fn repetition<T: Eq + Hash>(items: &[T], n: usize) -> f64 {
    assert!(n >= 1, "n-gram size must be at least 1");
    if items.len() < n {
        return 0.0;
    }
    let total = items.len() - n + 1;
    let distinct: HashSet<&[T]> = items.windows(n).collect();
    1.0 - distinct.len() as f64 / total as f64
}

pub fn char_ngram_repetition(text: &str, n: usize) -> f64 {
    let chars: Vec<char> = normalize(text).chars().collect();
    repetition(&chars, n)
}

pub fn word_ngram_repetition(text: &str, n: usize) -> f64 {
    let norm = normalize(text);
    let toks: Vec<&str> = words(&norm).collect();
    repetition(&toks, n)
}

/// Counts a token stream. Model tokenizers plug in through this trait.
pub trait Tokenizer: Send + Sync {
    fn count_tokens(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count_tokens(&self, text: &str) -> usize {
        words(text).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextCounts {
    pub text_length: usize,
    pub word_number: usize,
    pub token_number: usize,
}

pub fn counts(text: &str) -> TextCounts {
    counts_with(text, &WhitespaceTokenizer)
}

pub fn counts_with(text: &str, tokenizer: &dyn Tokenizer) -> TextCounts {
    TextCounts {
        text_length: text.chars().count(),
        word_number: words(text).count(),
        token_number: tokenizer.count_tokens(text),
    }
}

/// Lowercase term set loaded from a one-term-per-line file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    terms: HashSet<String>,
}

impl Lexicon {
    pub fn new<I, S>(terms: I) -> crate::Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        for t in terms {
            let t = t.as_ref();
            if t.chars().any(char::is_whitespace) {
                return Err(crate::Error::Invalid(format!("lexicon term {t:?} contains whitespace")));
            }
            if !t.is_empty() {
                set.insert(t.to_lowercase());
            }
        }
        if set.is_empty() {
            return Err(crate::Error::Invalid("lexicon is empty".into()));
        }
        Ok(Self { terms: set })
    }

    /// Parses the file form: `#` starts a comment line, surrounding
    /// whitespace is trimmed, blank lines are skipped.
    pub fn parse(content: &str) -> crate::Result<Self> {
        Self::new(
            content
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &std::path::Path) -> crate::Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| crate::Error::Asset {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        Self::parse(&content).map_err(|e| crate::Error::Asset {
            path: path.to_owned(),
            reason: e.to_string(),
        })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.terms.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Share of whitespace tokens found in the lexicon (stopword and
/// flagged-word ratios).
pub fn lexicon_ratio(text: &str, lexicon: &Lexicon) -> f64 {
    let (hits, total) = words(text).fold((0usize, 0usize), |(h, t), w| (h + lexicon.contains(w) as usize, t + 1));
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Occurrences of verb-lexicon tokens.
pub fn action_number(text: &str, verbs: &Lexicon) -> usize {
    words(text).filter(|w| verbs.contains(w)).count()
}

/// Lowercased whitespace-token frequencies.
pub fn token_frequencies<'a, I>(texts: I) -> HashMap<String, u64>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut freq = HashMap::new();
    for text in texts {
        for w in words(text) {
            *freq.entry(w.to_lowercase()).or_insert(0) += 1;
        }
    }
    freq
}
