//! Mapper extension point: operators that transform samples instead of
//! filtering them.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Dataset, Sample};

pub type MapperParams = BTreeMap<String, serde_json::Value>;

pub trait Mapper: Send + Sync {
    fn name(&self) -> &str;

    /// Returns the transformed sample. Stats are handled by the caller.
    fn map(&self, sample: &Sample, params: &MapperParams) -> Result<Sample>;
}

pub struct IdentityMapper;

impl Mapper for IdentityMapper {
    fn name(&self) -> &str {
        "identity"
    }

    fn map(&self, sample: &Sample, _: &MapperParams) -> Result<Sample> {
        Ok(sample.clone())
    }
}

pub struct LowercaseText;

impl Mapper for LowercaseText {
    fn name(&self) -> &str {
        "lowercase_text"
    }

    fn map(&self, sample: &Sample, _: &MapperParams) -> Result<Sample> {
        let mut out = sample.clone();
        out.text = sample.text.to_lowercase();
        Ok(out)
    }
}

#[derive(Clone)]
pub struct MapperRegistry {
    mappers: BTreeMap<String, Arc<dyn Mapper>>,
}

impl Default for MapperRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(IdentityMapper));
        r.register(Arc::new(LowercaseText));
        r
    }
}

impl MapperRegistry {
    pub fn empty() -> Self {
        Self {
            mappers: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, mapper: Arc<dyn Mapper>) {
        self.mappers.insert(mapper.name().to_owned(), mapper);
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn Mapper>> {
        self.mappers.get(name).ok_or_else(|| Error::UnknownMapper(name.to_owned()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.mappers.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.mappers.keys().map(String::as_str)
    }
}

/// Applies a registered mapper to every sample.
///
/// Stats carry no record of their inputs, so a sample whose text or media
/// changed loses all of its stats; untouched samples keep theirs.
pub fn apply_mapper(dataset: &Dataset, registry: &MapperRegistry, name: &str, params: &MapperParams) -> Result<Dataset> {
    let mapper = registry.get(name)?;
    let samples: Vec<Sample> = dataset
        .samples()
        .par_iter()
        .map(|s| {
            let mut out = mapper.map(s, params)?;
            out.id.clone_from(&s.id);
            if out.text != s.text || out.media != s.media {
                out.stats.clear();
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
            Sample::new("a", "AbC").with_stat("text_length", 3.0),
            Sample::new("b", "low").with_stat("text_length", 3.0),
        ])
    }

    #[test]
    fn identity_keeps_digest() {
        let out = apply_mapper(&ds(), &MapperRegistry::default(), "identity", &MapperParams::new()).unwrap();
        assert_eq!(out.digest(), ds().digest());
    }

    #[test]
    fn lowercase_clears_changed_stats() {
        let out = apply_mapper(&ds(), &MapperRegistry::default(), "lowercase_text", &MapperParams::new()).unwrap();
        assert_eq!(out.samples()[0].text, "abc");
        assert!(out.samples()[0].stats.is_empty());
        // unchanged text keeps its stats
        assert_eq!(out.samples()[1].stats["text_length"], 3.0);
    }

    #[test]
    fn unknown_mapper() {
        let err = apply_mapper(&ds(), &MapperRegistry::default(), "diffusion", &MapperParams::new()).unwrap_err();
        assert!(matches!(err, Error::UnknownMapper(ref n) if n == "diffusion"));
    }
}
