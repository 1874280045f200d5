//! Operators: statistic computation, keep-range filters, mappers and the
//! external scorer bridge.

mod filter;
pub mod lm;
mod mapper;
pub mod scorer;
mod stats;
pub mod text;

pub use filter::apply_filter;
pub use lm::{perplexity, BigramLanguageModel};
pub use mapper::{apply_mapper, IdentityMapper, LowercaseText, Mapper, MapperParams, MapperRegistry};
pub use scorer::{external_score, external_score_batched, ScorerCommand, ScorerOutput};
pub use stats::{compute_stats, compute_stats_with, StatOp, StatSpec};
pub use text::{Lexicon, TextCounts, Tokenizer, WhitespaceTokenizer};
