use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataPool, Dataset, OperatorConfig, SplitLabel};

pub const DEFAULT_MAX_PYRAMID_OPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidEntry {
    pub pool_id: String,
    pub ops: Vec<String>,
    pub level: usize,
    pub declared_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidSpec {
    pub top_ops: Vec<String>,
    /// Highest level first; within a level, subsets in rank order.
    pub entries: Vec<PyramidEntry>,
}

/// The `2^n - 1` pools of every non-empty subset of the top operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub spec: PyramidSpec,
    pub pools: Vec<DataPool>,
}

impl Pyramid {
    /// The pool filtered by every top operator.
    pub fn top_pool(&self) -> Option<&DataPool> {
        self.pools.first()
    }

    pub fn pool(&self, pool_id: &str) -> Option<&DataPool> {
        self.pools.iter().find(|p| p.pool_id() == pool_id)
    }

    pub fn max_level(&self) -> usize {
        self.spec.top_ops.len()
    }

    /// Pools at `level`, in entry order.
    pub fn level(&self, level: usize) -> impl Iterator<Item = &DataPool> {
        self.pools.iter().filter(move |p| p.pyramid_level() == Some(level))
    }
}

/// Subset masks over `n` items, largest subsets first, then in
/// lexicographic order of their members.
fn subset_order(n: usize) -> Vec<u32> {
    let mut masks: Vec<u32> = (1..(1u32 << n)).collect();
    let members = |m: u32| (0..n).filter(|i| m & (1 << i) != 0).collect::<Vec<_>>();
    masks.sort_by(|&a, &b| {
        b.count_ones()
            .cmp(&a.count_ones())
            .then_with(|| members(a).cmp(&members(b)))
    });
    masks
}

/// Builds one composed pool per non-empty subset of `top`, applying ops in
/// `top` order with their frozen ranges.
pub fn build_pyramid(dataset: &Dataset, top: &[OperatorConfig], max_ops: usize) -> Result<Pyramid> {
    if top.is_empty() {
        return Err(Error::Invalid("a pyramid needs at least one operator".into()));
    }
    if top.len() > max_ops {
        return Err(Error::PyramidTooLarge {
            requested: top.len(),
            max: max_ops,
        });
    }
    let mut names = HashSet::new();
    if let Some(dup) = top.iter().find(|op| !names.insert(op.op_name.as_str())) {
        return Err(Error::Invalid(format!("pyramid lists operator {:?} twice", dup.op_name)));
    }

    // keeps[i][j]: sample j passes op i
    let keeps: Vec<Vec<bool>> = top
        .iter()
        .map(|op| {
            dataset
                .iter()
                .map(|s| Ok(op.keep_range.contains(s.stat(&op.op_name)?)))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    let mut pools = Vec::new();
    for mask in subset_order(top.len()) {
        let members: Vec<usize> = (0..top.len()).filter(|i| mask & (1 << i) != 0).collect();
        let ids: Vec<String> = dataset
            .iter()
            .enumerate()
            .filter(|(j, _)| members.iter().all(|&i| keeps[i][*j]))
            .map(|(_, s)| s.id.clone())
            .collect();
        let ops: Vec<String> = members.iter().map(|&i| top[i].op_name.clone()).collect();
        let pool_id = format!("pyramid:{}", ops.join("+"));
        let size = ids.len();
        let provenance = members.iter().map(|&i| top[i].clone()).collect();
        pools.push(DataPool::new(
            pool_id.clone(),
            ids,
            provenance,
            SplitLabel::Composed,
            size,
            Some(members.len()),
        )?);
        entries.push(PyramidEntry {
            pool_id,
            ops,
            level: members.len(),
            declared_size: size,
        });
    }
    Ok(Pyramid {
        spec: PyramidSpec {
            top_ops: top.iter().map(|o| o.op_name.clone()).collect(),
            entries,
        },
        pools,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KeepRange, Sample};

    fn ds(n: usize) -> Dataset {
        (0..n)
            .map(|i| {
                let x = i as f64;
                Sample::new(format!("s{i}"), format!("t{i}"))
                    .with_stat("a", x % 7.0)
                    .with_stat("b", x % 5.0)
                    .with_stat("c", x % 3.0)
            })
            .collect()
    }

    fn top() -> Vec<OperatorConfig> {
        vec![
            OperatorConfig::new("a", KeepRange::at_least(2.0).unwrap()),
            OperatorConfig::new("b", KeepRange::at_most(3.0).unwrap()),
            OperatorConfig::new("c", KeepRange::new(1.0, 2.0).unwrap()),
        ]
    }

    #[test]
    fn three_ops_make_seven_pools() {
        let p = build_pyramid(&ds(100), &top(), DEFAULT_MAX_PYRAMID_OPS).unwrap();
        assert_eq!(p.pools.len(), 7);
        let top_pool = p.top_pool().unwrap();
        assert_eq!(top_pool.pyramid_level(), Some(3));
        assert_eq!(top_pool.pool_id(), "pyramid:a+b+c");
        let levels: Vec<usize> = p.spec.entries.iter().map(|e| e.level).collect();
        assert_eq!(levels, [3, 2, 2, 2, 1, 1, 1]);
        let ids: Vec<&str> = p.spec.entries.iter().map(|e| e.pool_id.as_str()).collect();
        assert_eq!(ids[1..4], ["pyramid:a+b", "pyramid:a+c", "pyramid:b+c"]);
    }

    #[test]
    fn sizes_shrink_up_the_chain() {
        let p = build_pyramid(&ds(500), &top(), DEFAULT_MAX_PYRAMID_OPS).unwrap();
        let size = |id: &str| p.pool(id).unwrap().len();
        assert!(size("pyramid:a+b+c") <= size("pyramid:a+b"));
        assert!(size("pyramid:a+b") <= size("pyramid:a"));
    }

    #[test]
    fn cap_and_duplicates() {
        let many: Vec<_> = (0..6)
            .map(|i| OperatorConfig::new(format!("op{i}"), KeepRange::full()))
            .collect();
        assert!(matches!(
            build_pyramid(&ds(3), &many, DEFAULT_MAX_PYRAMID_OPS),
            Err(Error::PyramidTooLarge { requested: 6, max: 5 })
        ));
        let dup = vec![top()[0].clone(), top()[0].clone()];
        assert!(build_pyramid(&ds(3), &dup, 5).is_err());
        assert!(build_pyramid(&ds(3), &[], 5).is_err());
    }
}
