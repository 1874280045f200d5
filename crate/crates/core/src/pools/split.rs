use std::cmp::Ordering;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::derive_seed;
use crate::error::{Error, Result};
use crate::model::{DataPool, Dataset, KeepRange, OperatorConfig, Sample, SplitLabel};

pub const MIN_BUCKETS: usize = 2;
pub const MAX_BUCKETS: usize = 5;

/// Cut points of a bucket split, frozen for reuse in compositions.
///
/// `cuts[j]` is the largest statistic in buckets `0..=j`. Re-applied as keep
/// ranges, a value equal to a cut belongs to the lower bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub op_name: String,
    pub buckets: usize,
    pub cuts: Vec<f64>,
    pub dataset_digest: String,
}

impl SplitBoundaries {
    /// Keep range of bucket `index`, or `None` when ties collapse it to an
    /// empty interval.
    pub fn frozen_range(&self, index: usize) -> Option<KeepRange> {
        assert!(index < self.buckets, "bucket {index} out of range");
        let lo = if index == 0 {
            f64::NEG_INFINITY
        } else {
            self.cuts[index - 1].next_up()
        };
        let hi = if index + 1 == self.buckets {
            f64::INFINITY
        } else {
            self.cuts[index]
        };
        KeepRange::new(lo, hi).ok()
    }

    pub fn bucket_of(&self, label: SplitLabel) -> Result<usize> {
        (0..self.buckets)
            .find(|&i| SplitLabel::for_bucket(i, self.buckets) == label)
            .ok_or_else(|| Error::Invalid(format!("{label} is not a bucket of a {}-way split", self.buckets)))
    }

    /// Frozen operator config for the bucket named `label`.
    pub fn config_for(&self, label: SplitLabel) -> Result<OperatorConfig> {
        let i = self.bucket_of(label)?;
        let range = self.frozen_range(i).ok_or_else(|| {
            Error::Invalid(format!(
                "bucket {label} of {:?} has no frozen range (tied cut points)",
                self.op_name
            ))
        })?;
        Ok(OperatorConfig::new(self.op_name.clone(), range))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortPool {
    pub pool_id: String,
    pub declared: usize,
    pub actual: usize,
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    /// Pools in ascending-stat order.
    pub pools: Vec<DataPool>,
    pub boundaries: SplitBoundaries,
    /// Bucket sizes before downsampling.
    pub group_sizes: Vec<usize>,
    pub short_pools: Vec<ShortPool>,
}

fn by_stat_then_id(a: &(f64, &Sample), b: &(f64, &Sample)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id))
}

/// Splits `dataset` into `buckets` contiguous groups by ascending
/// `(stat, id)`. Sizes differ by at most one, remainders going to the lower
/// groups first. Groups larger than `target_pool_size` are downsampled with
/// a seed derived from `seed`, the operator and the bucket; smaller groups
/// are kept whole and reported as short.
pub fn split_buckets(
    dataset: &Dataset,
    op_name: &str,
    buckets: usize,
    target_pool_size: usize,
    seed: u64,
) -> Result<SplitOutcome> {
    if !(MIN_BUCKETS..=MAX_BUCKETS).contains(&buckets) {
        return Err(Error::Invalid(format!(
            "bucket count {buckets} outside {MIN_BUCKETS}..={MAX_BUCKETS}"
        )));
    }
    if target_pool_size == 0 {
        return Err(Error::Invalid("target pool size must be at least 1".into()));
    }
    let mut sorted: Vec<(f64, &Sample)> = dataset
        .iter()
        .map(|s| Ok((s.stat(op_name)?, s)))
        .collect::<Result<_>>()?;
    sorted.sort_by(by_stat_then_id);

    let n = sorted.len();
    let group_sizes: Vec<usize> = (0..buckets).map(|j| n / buckets + usize::from(j < n % buckets)).collect();

    let mut cuts = Vec::with_capacity(buckets - 1);
    let mut pools = Vec::with_capacity(buckets);
    let mut short_pools = Vec::new();
    let mut start = 0;
    for (j, &size) in group_sizes.iter().enumerate() {
        let group = &sorted[start..start + size];
        start += size;
        if j + 1 < buckets {
            let cut = if start == 0 {
                f64::NEG_INFINITY
            } else {
                sorted[start - 1].0
            };
            cuts.push(cut);
        }

        let label = SplitLabel::for_bucket(j, buckets);
        let pool_id = format!("{op_name}/{label}");
        let mut chosen: Vec<&Sample> = if size > target_pool_size {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &pool_id));
            index::sample(&mut rng, size, target_pool_size)
                .into_iter()
                .map(|i| group[i].1)
                .collect()
        } else {
            if size < target_pool_size {
                short_pools.push(ShortPool {
                    pool_id: pool_id.clone(),
                    declared: target_pool_size,
                    actual: size,
                });
            }
            group.iter().map(|(_, s)| *s).collect()
        };
        chosen.sort_by_key(|s| dataset.position(&s.id));

        let observed = match (group.first(), group.last()) {
            (Some(lo), Some(hi)) => KeepRange::new(lo.0, hi.0)?,
            _ => KeepRange::full(),
        };
        pools.push((pool_id, chosen.into_iter().map(|s| s.id.clone()).collect::<Vec<_>>(), label, observed));
    }

    let boundaries = SplitBoundaries {
        op_name: op_name.to_owned(),
        buckets,
        cuts,
        dataset_digest: dataset.digest(),
    };
    let pools = pools
        .into_iter()
        .enumerate()
        .map(|(j, (pool_id, ids, label, observed))| {
            let range = boundaries.frozen_range(j).unwrap_or(observed);
            DataPool::new(
                pool_id,
                ids,
                vec![OperatorConfig::new(op_name, range)],
                label,
                target_pool_size,
                None,
            )
        })
        .collect::<Result<_>>()?;

    Ok(SplitOutcome {
        pools,
        boundaries,
        group_sizes,
        short_pools,
    })
}

/// Three-way split into `low`, `mid` and `high` pools.
pub fn split_tertiles(dataset: &Dataset, op_name: &str, target_pool_size: usize, seed: u64) -> Result<SplitOutcome> {
    split_buckets(dataset, op_name, 3, target_pool_size, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(values: &[f64]) -> Dataset {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| Sample::new(format!("s{i:02}"), "t").with_stat("x", *v))
            .collect()
    }

    fn stats_of(d: &Dataset, p: &DataPool) -> Vec<f64> {
        p.sample_ids().iter().map(|id| d.get(id).unwrap().stats["x"]).collect()
    }

    #[test]
    fn exact_thirds() {
        let d = ds(&[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let out = split_tertiles(&d, "x", 3, 0).unwrap();
        let got: Vec<Vec<f64>> = out.pools.iter().map(|p| stats_of(&d, p)).collect();
        assert_eq!(got, vec![vec![1., 2., 3.], vec![4., 5., 6.], vec![7., 8., 9.]]);
        assert_eq!(out.boundaries.cuts, vec![3.0, 6.0]);
        assert!(out.short_pools.is_empty());
    }

    #[test]
    fn remainder_goes_low_first() {
        let d = ds(&(1..=10).map(f64::from).collect::<Vec<_>>());
        let out = split_tertiles(&d, "x", 10, 0).unwrap();
        assert_eq!(out.group_sizes, vec![4, 3, 3]);
        assert_eq!(out.short_pools.len(), 3);
        let d11 = ds(&(1..=11).map(f64::from).collect::<Vec<_>>());
        assert_eq!(split_tertiles(&d11, "x", 10, 0).unwrap().group_sizes, vec![4, 4, 3]);
    }

    #[test]
    fn ties_break_by_id() {
        let d = ds(&[5.0; 6]);
        let out = split_tertiles(&d, "x", 2, 0).unwrap();
        let ids: Vec<&[String]> = out.pools.iter().map(|p| p.sample_ids()).collect();
        assert_eq!(ids[0], ["s00", "s01"]);
        assert_eq!(ids[1], ["s02", "s03"]);
        assert_eq!(ids[2], ["s04", "s05"]);
        // all cuts tie, so only the low bucket keeps a frozen range
        assert!(out.boundaries.frozen_range(0).is_some());
        assert!(out.boundaries.frozen_range(1).is_none());
    }

    #[test]
    fn downsampling_is_seeded() {
        let d = ds(&(0..300).map(f64::from).collect::<Vec<_>>());
        let a = split_tertiles(&d, "x", 50, 1).unwrap();
        let b = split_tertiles(&d, "x", 50, 1).unwrap();
        let c = split_tertiles(&d, "x", 50, 2).unwrap();
        assert_eq!(a.pools, b.pools);
        assert_ne!(a.pools, c.pools);
        assert!(a.pools.iter().all(|p| p.len() == 50));
    }

    #[test]
    fn frozen_ranges_reapply_to_the_same_groups() {
        let d = ds(&[1., 2., 2., 3., 4., 4., 5., 6., 7.]);
        let out = split_tertiles(&d, "x", 100, 0).unwrap();
        let low = out.boundaries.frozen_range(0).unwrap();
        let mid = out.boundaries.frozen_range(1).unwrap();
        assert_eq!(low.hi(), 2.0);
        assert!(!mid.contains(2.0));
        assert!(mid.contains(2.0f64.next_up()));
    }

    #[test]
    fn bucket_count_is_bounded() {
        let d = ds(&[1.0, 2.0]);
        assert!(split_buckets(&d, "x", 1, 1, 0).is_err());
        assert!(split_buckets(&d, "x", 6, 1, 0).is_err());
        let four = split_buckets(&d, "x", 4, 1, 0).unwrap();
        assert_eq!(four.pools[3].split_label(), SplitLabel::Bucket(4));
    }

    #[test]
    fn config_for_label() {
        let d = ds(&[1., 2., 3., 4., 5., 6.]);
        let out = split_tertiles(&d, "x", 2, 0).unwrap();
        let high = out.boundaries.config_for(SplitLabel::High).unwrap();
        assert_eq!(high.keep_range.lo(), 4.0f64.next_up());
        assert!(out.boundaries.config_for(SplitLabel::Random).is_err());
    }
}
