use std::collections::HashSet;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::model::{DataPool, Dataset, Sample, SplitLabel};

/// Exact-match key: NFC text plus sorted media paths.
pub fn dedup_key(sample: &Sample) -> String {
    let mut key: String = sample.text.nfc().collect();
    if let Some(media) = &sample.media {
        let mut paths: Vec<&str> = media.values().map(String::as_str).collect();
        paths.sort_unstable();
        for p in paths {
            key.push('\u{0}');
            key.push_str(p);
        }
    }
    key
}

/// Concatenates `pools` (highest pyramid level first) and drops every sample
/// whose dedup key was already seen. First occurrence wins.
///
/// The merged pool keeps the provenance steps shared by all inputs, which
/// every merged sample satisfies.
pub fn dedup_exact(pools: &[&DataPool], dataset: &Dataset) -> Result<DataPool> {
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    for pool in pools {
        for id in pool.sample_ids() {
            let sample = dataset
                .get(id)
                .ok_or_else(|| Error::Invalid(format!("pool {:?} references unknown id {id:?}", pool.pool_id())))?;
            if seen.insert(dedup_key(sample)) {
                ids.push(id.clone());
            }
        }
    }
    let common = match pools.split_first() {
        Some((first, rest)) => first
            .provenance()
            .iter()
            .filter(|step| rest.iter().all(|p| p.provenance().contains(step)))
            .cloned()
            .collect(),
        None => Vec::new(),
    };
    let pool_id = format!(
        "merged:{}",
        pools.iter().map(|p| p.pool_id()).collect::<Vec<_>>().join("|")
    );
    let size = ids.len();
    DataPool::new(pool_id, ids, common, SplitLabel::Merged, size, None)
}
