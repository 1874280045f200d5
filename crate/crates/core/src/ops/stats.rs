use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Sample};
use crate::ops::lm::{perplexity, BigramLanguageModel};
use crate::ops::scorer::{external_score_batched, ScorerCommand};
use crate::ops::text::{self, Lexicon};

fn default_batch_size() -> usize {
    256
}

/// The computation behind one statistic, with its typed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StatOp {
    TextLength,
    WordNumber,
    TokenNumber,
    AlphanumericRatio,
    SpecialCharRatio,
    CharRepetitionRatio {
        n: usize,
    },
    WordRepetitionRatio {
        n: usize,
    },
    /// Stopword and flagged-word ratios; the lexicon decides which.
    LexiconRatio {
        lexicon: PathBuf,
    },
    ActionNumber {
        lexicon: PathBuf,
    },
    Perplexity {
        counts: PathBuf,
    },
    External {
        #[serde(flatten)]
        command: ScorerCommand,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
    },
}

impl StatOp {
    fn validate(&self) -> Result<()> {
        match self {
            StatOp::CharRepetitionRatio { n } | StatOp::WordRepetitionRatio { n } if *n == 0 => {
                Err(Error::Invalid("n-gram size must be at least 1".into()))
            }
            StatOp::External { command, .. } if command.argv.is_empty() => {
                Err(Error::Invalid("external scorer command is empty".into()))
            }
            _ => Ok(()),
        }
    }

    fn asset(&self) -> Option<&Path> {
        match self {
            StatOp::LexiconRatio { lexicon } | StatOp::ActionNumber { lexicon } => Some(lexicon),
            StatOp::Perplexity { counts } => Some(counts),
            _ => None,
        }
    }
}

/// One operator's statistic. The stat is stored on samples under `name`,
/// which by convention is also the operator name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSpec {
    pub name: String,
    #[serde(flatten)]
    pub op: StatOp,
}

impl StatSpec {
    pub fn new(name: impl Into<String>, op: StatOp) -> Self {
        Self { name: name.into(), op }
    }

    /// Lexicon or count file the statistic reads, if any.
    pub fn asset(&self) -> Option<&Path> {
        self.op.asset()
    }

    /// Resolves relative asset paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.op {
            StatOp::LexiconRatio { lexicon } | StatOp::ActionNumber { lexicon } => fix(lexicon),
            StatOp::Perplexity { counts } => fix(counts),
            _ => {}
        }
    }
}

enum Resolved<'a> {
    Pure(&'a StatOp),
    Lexicon(Lexicon),
    Actions(Lexicon),
    Lm(BigramLanguageModel),
    Scored(BTreeMap<String, f64>),
}

fn check_specs(specs: &[StatSpec]) -> Result<Vec<&StatSpec>> {
    let mut by_name: BTreeMap<&str, &StatSpec> = BTreeMap::new();
    let mut unique = Vec::new();
    for spec in specs {
        spec.op.validate()?;
        match by_name.get(spec.name.as_str()) {
            Some(prev) if prev.op != spec.op => {
                return Err(Error::StatCollision {
                    stat: spec.name.clone(),
                    first: format!("{:?}", prev.op),
                    second: format!("{:?}", spec.op),
                })
            }
            Some(_) => {}
            None => {
                by_name.insert(&spec.name, spec);
                unique.push(spec);
            }
        }
    }
    Ok(unique)
}

fn resolve<'a>(spec: &'a StatSpec, dataset: &Dataset, max_parallel: usize) -> Result<Resolved<'a>> {
    if let Some(path) = spec.op.asset() {
        if !path.exists() {
            return Err(Error::Asset {
                path: path.to_owned(),
                reason: "file not found".into(),
            });
        }
    }
    Ok(match &spec.op {
        StatOp::LexiconRatio { lexicon } => Resolved::Lexicon(Lexicon::load(lexicon)?),
        StatOp::ActionNumber { lexicon } => Resolved::Actions(Lexicon::load(lexicon)?),
        StatOp::Perplexity { counts } => Resolved::Lm(BigramLanguageModel::load(counts)?),
        StatOp::External { command, batch_size } => {
            Resolved::Scored(external_score_batched(dataset.samples(), command, *batch_size, max_parallel)?)
        }
        op => Resolved::Pure(op),
    })
}

fn evaluate(resolved: &Resolved<'_>, sample: &Sample) -> Result<f64> {
    let t = sample.text.as_str();
    Ok(match resolved {
        Resolved::Pure(op) => match op {
            StatOp::TextLength => text::counts(t).text_length as f64,
            StatOp::WordNumber => text::counts(t).word_number as f64,
            StatOp::TokenNumber => text::counts(t).token_number as f64,
            StatOp::AlphanumericRatio => text::alphanumeric_ratio(t),
            StatOp::SpecialCharRatio => text::special_char_ratio(t),
            StatOp::CharRepetitionRatio { n } => text::char_ngram_repetition(t, *n),
            StatOp::WordRepetitionRatio { n } => text::word_ngram_repetition(t, *n),
            _ => unreachable!("asset-backed ops are resolved"),
        },
        Resolved::Lexicon(lex) => text::lexicon_ratio(t, lex),
        Resolved::Actions(lex) => text::action_number(t, lex) as f64,
        Resolved::Lm(lm) => perplexity(t, lm).map_err(|e| Error::Invalid(format!("sample {:?}: {e}", sample.id)))?,
        Resolved::Scored(scores) => *scores
            .get(&sample.id)
            .ok_or_else(|| Error::ScorerMissingId(sample.id.clone()))?,
    })
}

/// Attaches one statistic per spec to every sample. Unrelated stats are
/// kept; output order matches input order for any degree of parallelism.
pub fn compute_stats(dataset: &Dataset, specs: &[StatSpec]) -> Result<Dataset> {
    compute_stats_with(dataset, specs, rayon::current_num_threads())
}

/// As [`compute_stats`], capping concurrent external scorer processes.
pub fn compute_stats_with(dataset: &Dataset, specs: &[StatSpec], max_parallel: usize) -> Result<Dataset> {
    let specs = check_specs(specs)?;
    if specs.is_empty() {
        return Ok(dataset.clone());
    }
    let resolved: Vec<(&str, Resolved<'_>)> = specs
        .iter()
        .map(|s| Ok((s.name.as_str(), resolve(s, dataset, max_parallel)?)))
        .collect::<Result<_>>()?;
    let samples: Vec<Sample> = dataset
        .samples()
        .par_iter()
        .map(|sample| {
            let mut out = sample.clone();
            for (name, r) in &resolved {
                out.stats.insert((*name).to_owned(), evaluate(r, sample)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset::new(samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds() -> Dataset {
        Dataset::new(vec![
            Sample::new("a", "hello world").with_stat("keep", 1.0),
            Sample::new("b", "x"),
            Sample::new("c", "a a a"),
        ])
    }

    #[test]
    fn text_length_is_attached_to_every_sample() {
        let out = compute_stats(&ds(), &[StatSpec::new("text_length", StatOp::TextLength)]).unwrap();
        let lens: Vec<f64> = out.iter().map(|s| s.stats["text_length"]).collect();
        assert_eq!(lens, [11.0, 1.0, 5.0]);
        assert_eq!(out.samples()[0].stats["keep"], 1.0);
    }

    #[test]
    fn empty_spec_list_is_identity() {
        assert_eq!(compute_stats(&ds(), &[]).unwrap(), ds());
    }

    #[test]
    fn recomputation_is_idempotent() {
        let specs = [
            StatSpec::new("char_rep", StatOp::CharRepetitionRatio { n: 2 }),
            StatSpec::new("alnum", StatOp::AlphanumericRatio),
        ];
        let once = compute_stats(&ds(), &specs).unwrap();
        let twice = compute_stats(&once, &specs).unwrap();
        assert_eq!(once.digest(), twice.digest());
    }

    #[test]
    fn missing_asset_is_reported() {
        let spec = StatSpec::new(
            "stop",
            StatOp::LexiconRatio {
                lexicon: "/no/such/lexicon.txt".into(),
            },
        );
        assert!(matches!(compute_stats(&ds(), &[spec]), Err(Error::Asset { .. })));
    }

    #[test]
    fn conflicting_specs_for_one_stat_collide() {
        let specs = [
            StatSpec::new("rep", StatOp::CharRepetitionRatio { n: 2 }),
            StatSpec::new("rep", StatOp::CharRepetitionRatio { n: 3 }),
        ];
        assert!(matches!(compute_stats(&ds(), &specs), Err(Error::StatCollision { .. })));
    }

    #[test]
    fn spec_file_form() {
        let spec: StatSpec = serde_json::from_str(r#"{"name":"rep3","op":"char_repetition_ratio","n":3}"#).unwrap();
        assert_eq!(spec.op, StatOp::CharRepetitionRatio { n: 3 });
        let ext: StatSpec =
            serde_json::from_str(r#"{"name":"nsfw","op":"external","argv":["scorer"],"batch_size":8}"#).unwrap();
        assert!(matches!(ext.op, StatOp::External { batch_size: 8, .. }));
        assert!(serde_json::from_str::<StatSpec>(r#"{"name":"x","op":"char_repetition_ratio"}"#).is_err());
    }

    #[test]
    fn lexicon_and_lm_assets_load() {
        let dir = tempfile::tempdir().unwrap();
        let lex = dir.path().join("stop.txt");
        std::fs::write(&lex, "a\n").unwrap();
        let lm = dir.path().join("lm.tsv");
        std::fs::write(&lm, "<s>\ta\t1\n").unwrap();
        let specs = [
            StatSpec::new("stop", StatOp::LexiconRatio { lexicon: lex.clone() }),
            StatSpec::new("acts", StatOp::ActionNumber { lexicon: lex }),
            StatSpec::new("ppl", StatOp::Perplexity { counts: lm }),
        ];
        let out = compute_stats(&ds(), &specs).unwrap();
        let c = out.get("c").unwrap();
        assert_eq!(c.stats["stop"], 1.0);
        assert_eq!(c.stats["acts"], 3.0);
        assert!(c.stats["ppl"] >= 1.0);
    }

    #[cfg(unix)]
    #[test]
    fn external_stat_is_attached() {
        let spec = StatSpec::new(
            "nsfw",
            StatOp::External {
                command: ScorerCommand::new([
                    "sh",
                    "-c",
                    r#"sed -E 's/^\{"id":("[^"]*").*/{"id":\1,"score":0.5}/' "$1""#,
                    "scorer",
                ]),
                batch_size: 2,
            },
        );
        let out = compute_stats(&ds(), &[spec]).unwrap();
        assert!(out.iter().all(|s| s.stats["nsfw"] == 0.5));
    }
}
