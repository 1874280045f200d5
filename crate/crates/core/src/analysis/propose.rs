use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::analysis::cluster::ClusterAssignment;
use crate::analysis::rank::OpRankRow;
use crate::error::{Error, Result};
use crate::model::{OperatorConfig, Recipe, RecipeOrigin};
use crate::pools::BoundaryBook;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalStrategy {
    /// Subsets of the `max_order` best-ranked operators.
    TopK,
    /// Subsets of the best-ranked operator of each cluster.
    ClusterRepresentative,
}

/// Best-ranked member of every cluster, in ranking order. Cluster members
/// absent from the ranking are ignored.
pub fn cluster_representatives<'a>(ranking: &'a [OpRankRow], clusters: &ClusterAssignment) -> Vec<&'a OpRankRow> {
    let mut seen = HashSet::new();
    ranking
        .iter()
        .filter(|row| {
            let Some(i) = clusters.items.iter().position(|it| *it == row.op_name) else {
                return false;
            };
            seen.insert(clusters.labels[i])
        })
        .collect()
}

/// Candidate recipes, singletons first and larger combinations after; each
/// operator keeps the frozen range of its best split.
pub fn propose_recipes(
    ranking: &[OpRankRow],
    clusters: Option<&ClusterAssignment>,
    strategy: ProposalStrategy,
    max_order: usize,
    book: &BoundaryBook,
) -> Result<Vec<Recipe>> {
    if ranking.is_empty() {
        return Err(Error::Invalid("cannot propose recipes from an empty ranking".into()));
    }
    let (pool, origin): (Vec<&OpRankRow>, _) = match strategy {
        ProposalStrategy::TopK => (ranking.iter().collect(), RecipeOrigin::TopK),
        ProposalStrategy::ClusterRepresentative => {
            let clusters = clusters
                .ok_or_else(|| Error::Invalid("cluster-representative proposals need a clustering".into()))?;
            (cluster_representatives(ranking, clusters), RecipeOrigin::ClusterRepresentative)
        }
    };
    if max_order == 0 {
        return Err(Error::Invalid("max_order must be at least 1".into()));
    }
    if max_order > pool.len() {
        return Err(Error::MaxOrder {
            max_order,
            available: pool.len(),
        });
    }
    let chosen: Vec<OperatorConfig> = pool[..max_order]
        .iter()
        .map(|row| book.config(&row.op_name, row.best_split))
        .collect::<Result<_>>()?;
    let mut masks: Vec<u32> = (1..(1u32 << max_order)).collect();
    let members = |m: u32| (0..max_order).filter(|i| m & (1 << i) != 0).collect::<Vec<_>>();
    masks.sort_by(|&a, &b| a.count_ones().cmp(&b.count_ones()).then_with(|| members(a).cmp(&members(b))));
    masks
        .into_iter()
        .map(|m| Recipe::new(members(m).into_iter().map(|i| chosen[i].clone()).collect(), origin))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dataset, Sample};
    use crate::pools::split_tertiles;

    fn book(ops: &[&str]) -> BoundaryBook {
        let d: Dataset = (0..9)
            .map(|i| {
                ops.iter()
                    .fold(Sample::new(format!("s{i}"), "t"), |s, op| s.with_stat(*op, i as f64))
            })
            .collect();
        ops.iter().map(|op| split_tertiles(&d, op, 1, 0).unwrap().boundaries).collect()
    }

    fn ranking(names: &[&str]) -> Vec<OpRankRow> {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| OpRankRow::tertiles(*n, 0.0, 0.0, 10.0 - i as f64).unwrap())
            .collect()
    }

    #[test]
    fn top_k_enumerates_all_subsets() {
        let r = ranking(&["A", "B", "C"]);
        let recipes = propose_recipes(&r, None, ProposalStrategy::TopK, 3, &book(&["A", "B", "C"])).unwrap();
        let labels: Vec<String> = recipes.iter().map(Recipe::label).collect();
        assert_eq!(labels, ["A", "B", "C", "A+B", "A+C", "B+C", "A+B+C"]);
        assert!(recipes.iter().all(|r| r.origin_strategy() == RecipeOrigin::TopK));
        // high split keeps values above the second cut
        assert_eq!(recipes[0].ops()[0].keep_range.hi(), f64::INFINITY);
    }

    #[test]
    fn max_order_one_and_too_large() {
        let r = ranking(&["A", "B"]);
        let b = book(&["A", "B"]);
        let recipes = propose_recipes(&r, None, ProposalStrategy::TopK, 1, &b).unwrap();
        assert_eq!(recipes.len(), 1);
        assert!(matches!(
            propose_recipes(&r, None, ProposalStrategy::TopK, 3, &b),
            Err(Error::MaxOrder { max_order: 3, available: 2 })
        ));
    }

    #[test]
    fn cluster_representatives_pick_best_per_cluster() {
        let r = ranking(&["A", "B", "C", "D", "E"]);
        let clusters = ClusterAssignment {
            k: 3,
            items: ["A", "D", "B", "C", "E"].map(String::from).to_vec(),
            labels: vec![0, 0, 1, 2, 2],
            merges: vec![],
        };
        let reps: Vec<_> = cluster_representatives(&r, &clusters).iter().map(|r| r.op_name.as_str()).collect();
        assert_eq!(reps, ["A", "B", "C"]);
        let b = book(&["A", "B", "C", "D", "E"]);
        let recipes = propose_recipes(&r, Some(&clusters), ProposalStrategy::ClusterRepresentative, 3, &b).unwrap();
        assert_eq!(recipes.len(), 7);
        assert!(recipes.iter().all(|r| r.ops().iter().all(|o| ["A", "B", "C"].contains(&o.op_name.as_str()))));
        assert!(propose_recipes(&r, None, ProposalStrategy::ClusterRepresentative, 1, &b).is_err());
    }
}
