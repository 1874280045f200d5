use crate::error::Result;
use crate::model::{DataPool, Dataset, KeepRange, OperatorConfig, Sample, SplitLabel};

/// Ids of samples whose `stat` lies in `range`, in input order.
fn keep_ids<'a, I>(samples: I, stat: &str, range: KeepRange) -> Result<Vec<String>>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let mut kept = Vec::new();
    for s in samples {
        if range.contains(s.stat(stat)?) {
            kept.push(s.id.clone());
        }
    }
    Ok(kept)
}

/// Keeps samples whose statistic lies in the closed `keep_range`.
///
/// Every sample must already carry the statistic; run
/// [`compute_stats`](crate::ops::compute_stats) first.
pub fn apply_filter(dataset: &Dataset, op_name: &str, keep_range: KeepRange) -> Result<DataPool> {
    let ids = keep_ids(dataset.iter(), op_name, keep_range)?;
    let size = ids.len();
    DataPool::new(
        format!("filter:{op_name}:{keep_range}"),
        ids,
        vec![OperatorConfig::new(op_name, keep_range)],
        SplitLabel::Composed,
        size,
        Some(1),
    )
}
