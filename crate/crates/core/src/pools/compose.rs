use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::derive_seed;
use crate::error::{Error, Result};
use crate::model::{DataPool, Dataset, OperatorConfig, Recipe, Sample, SplitLabel};
use crate::pools::split::SplitBoundaries;

/// Uniform sample without replacement, in drawn order. Deterministic per
/// seed.
pub fn sample_random_control(dataset: &Dataset, size: usize, seed: u64) -> Result<DataPool> {
    if size > dataset.len() {
        return Err(Error::NotEnoughSamples {
            requested: size,
            available: dataset.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "random"));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let (chosen, _) = order.partial_shuffle(&mut rng, size);
    let ids = chosen.iter().map(|&i| dataset.samples()[i].id.clone()).collect();
    DataPool::new("random", ids, Vec::new(), SplitLabel::Random, size, None)
}

/// Frozen split boundaries per operator, computed once on the probe
/// dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBook {
    by_op: BTreeMap<String, SplitBoundaries>,
}

impl BoundaryBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, boundaries: SplitBoundaries) {
        self.by_op.insert(boundaries.op_name.clone(), boundaries);
    }

    pub fn get(&self, op_name: &str) -> Result<&SplitBoundaries> {
        self.by_op
            .get(op_name)
            .ok_or_else(|| Error::MissingBoundaries(op_name.to_owned()))
    }

    /// Frozen config for one bucket of one operator.
    pub fn config(&self, op_name: &str, label: SplitLabel) -> Result<OperatorConfig> {
        self.get(op_name)?.config_for(label)
    }

    pub fn ops(&self) -> impl Iterator<Item = &str> {
        self.by_op.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_op.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_op.is_empty()
    }
}

impl FromIterator<SplitBoundaries> for BoundaryBook {
    fn from_iter<T: IntoIterator<Item = SplitBoundaries>>(iter: T) -> Self {
        let mut book = Self::new();
        for b in iter {
            book.insert(b);
        }
        book
    }
}

/// Applies the recipe's filters in order with their frozen keep ranges.
///
/// Every operator must have boundaries in `book`; ranges are never
/// recomputed on intermediate subsets, so the result equals the
/// intersection of the single-operator keep sets.
pub fn compose_recipe(dataset: &Dataset, recipe: &Recipe, book: &BoundaryBook) -> Result<DataPool> {
    for op in recipe.ops() {
        book.get(&op.op_name)?;
    }
    let mut current: Vec<&Sample> = dataset.iter().collect();
    for op in recipe.ops() {
        let mut kept = Vec::with_capacity(current.len());
        for s in current {
            if op.keep_range.contains(s.stat(&op.op_name)?) {
                kept.push(s);
            }
        }
        current = kept;
    }
    let ids: Vec<String> = current.into_iter().map(|s| s.id.clone()).collect();
    let size = ids.len();
    DataPool::new(
        format!("recipe:{}", recipe.label()),
        ids,
        recipe.ops().to_vec(),
        SplitLabel::Composed,
        size,
        Some(recipe.len()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KeepRange, RecipeOrigin};
    use crate::ops::apply_filter;
    use crate::pools::split::split_tertiles;

    fn two_stat(rows: &[(f64, f64)]) -> Dataset {
        rows.iter()
            .enumerate()
            .map(|(i, (a, b))| Sample::new(format!("s{i}"), "t").with_stat("A", *a).with_stat("B", *b))
            .collect()
    }

    fn book_for(d: &Dataset) -> BoundaryBook {
        ["A", "B"]
            .iter()
            .map(|op| split_tertiles(d, op, 1, 0).unwrap().boundaries)
            .collect()
    }

    #[test]
    fn random_control_full_size_is_a_permutation() {
        let d = two_stat(&[(1., 1.), (2., 2.), (3., 3.), (4., 4.)]);
        let p = sample_random_control(&d, 4, 9).unwrap();
        let mut ids = p.sample_ids().to_vec();
        ids.sort();
        assert_eq!(ids, ["s0", "s1", "s2", "s3"]);
        assert!(p.provenance().is_empty());
    }

    #[test]
    fn random_control_is_seeded() {
        let d: Dataset = (0..10_000).map(|i| Sample::new(format!("{i}"), "t")).collect();
        let a = sample_random_control(&d, 100, 1).unwrap();
        assert_eq!(a, sample_random_control(&d, 100, 1).unwrap());
        assert_ne!(a.content_digest(), sample_random_control(&d, 100, 2).unwrap().content_digest());
        assert!(sample_random_control(&d, 10_001, 1).is_err());
    }

    #[test]
    fn interval_logic() {
        let d = two_stat(&[(8., 2.), (8., 5.)]);
        let recipe = Recipe::new(
            vec![
                OperatorConfig::new("A", KeepRange::at_least(7.0).unwrap()),
                OperatorConfig::new("B", KeepRange::at_most(3.0).unwrap()),
            ],
            RecipeOrigin::Manual,
        )
        .unwrap();
        let book = book_for(&d);
        let pool = compose_recipe(&d, &recipe, &book).unwrap();
        assert_eq!(pool.sample_ids(), ["s0"]);
        assert_eq!(pool.pyramid_level(), Some(2));
        let names: Vec<_> = pool.provenance().iter().map(|p| p.op_name.as_str()).collect();
        assert_eq!(names, ["A", "B"]);
    }

    #[test]
    fn single_op_recipe_matches_filter() {
        let d = two_stat(&[(1., 0.), (5., 0.), (9., 0.), (3., 0.)]);
        let book = book_for(&d);
        let cfg = book.config("A", SplitLabel::High).unwrap();
        let recipe = Recipe::new(vec![cfg.clone()], RecipeOrigin::Manual).unwrap();
        let composed = compose_recipe(&d, &recipe, &book).unwrap();
        let filtered = apply_filter(&d, "A", cfg.keep_range).unwrap();
        assert_eq!(composed.sample_ids(), filtered.sample_ids());
    }

    #[test]
    fn missing_boundaries() {
        let d = two_stat(&[(1., 1.)]);
        let recipe = Recipe::new(vec![OperatorConfig::new("C", KeepRange::full())], RecipeOrigin::Manual).unwrap();
        assert!(matches!(
            compose_recipe(&d, &recipe, &book_for(&d)),
            Err(Error::MissingBoundaries(ref op)) if op == "C"
        ));
    }
}
