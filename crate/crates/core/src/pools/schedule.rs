use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::derive_seed;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::pools::dedup::dedup_key;
use crate::pools::pyramid::Pyramid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// `k` shuffled passes over the top pool.
    Repetitive,
    /// One pass down the pyramid levels, deduplicated, until the sample
    /// count matches the repetitive total.
    NonRepetitive,
}

impl std::fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScheduleMode::Repetitive => "repetitive",
            ScheduleMode::NonRepetitive => "non-repetitive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSegment {
    pub pool_id: String,
    pub pass: usize,
    /// Samples this segment contributes.
    pub take: usize,
    pub shuffle_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeSchedule {
    pub mode: ScheduleMode,
    pub k: usize,
    pub stream: Vec<StreamSegment>,
    /// Trained samples.
    pub total: usize,
    /// `k` times the top pool size.
    pub target: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ComputeSchedule {
    pub fn is_truncated(&self) -> bool {
        self.total < self.target
    }

    /// Expands the schedule into the ordered list of trained sample ids.
    pub fn materialize(&self, pyramid: &Pyramid, dataset: &Dataset) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(self.total);
        let mut seen = HashSet::new();
        for seg in &self.stream {
            let pool = pyramid
                .pool(&seg.pool_id)
                .ok_or_else(|| Error::Invalid(format!("schedule references unknown pool {:?}", seg.pool_id)))?;
            match self.mode {
                ScheduleMode::Repetitive => {
                    let mut ids = pool.sample_ids().to_vec();
                    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seg.shuffle_seed));
                    out.extend(ids.into_iter().take(seg.take));
                }
                ScheduleMode::NonRepetitive => {
                    let mut taken = 0;
                    for id in pool.sample_ids() {
                        if taken == seg.take {
                            break;
                        }
                        let s = dataset
                            .get(id)
                            .ok_or_else(|| Error::Invalid(format!("unknown sample id {id:?}")))?;
                        if seen.insert(dedup_key(s)) {
                            out.push(id.clone());
                            taken += 1;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Plans `k` times the top pool's worth of training samples.
///
/// Repetitive mode makes `k` passes over the top pool, each with its own
/// shuffle seed. Non-repetitive mode walks the pyramid from the top level
/// down, adding only samples whose dedup key is new, until the same total
/// is reached; when the whole pyramid holds fewer unique samples the total
/// is truncated and a warning is recorded.
pub fn schedule_compute(
    pyramid: &Pyramid,
    dataset: &Dataset,
    k: usize,
    mode: ScheduleMode,
    seed: u64,
) -> Result<ComputeSchedule> {
    if k == 0 {
        return Err(Error::Invalid("expansion rate must be at least 1".into()));
    }
    let top = pyramid.top_pool().ok_or(Error::EmptyPyramid)?;
    if top.is_empty() {
        return Err(Error::EmptyPyramid);
    }
    let target = k * top.len();
    let mut stream = Vec::new();
    let mut warnings = Vec::new();
    let total = match mode {
        ScheduleMode::Repetitive => {
            for pass in 0..k {
                stream.push(StreamSegment {
                    pool_id: top.pool_id().to_owned(),
                    pass,
                    take: top.len(),
                    shuffle_seed: derive_seed(seed, &format!("{}#{pass}", top.pool_id())),
                });
            }
            target
        }
        ScheduleMode::NonRepetitive => {
            let mut seen = HashSet::new();
            let mut total = 0;
            'levels: for level in (1..=pyramid.max_level()).rev() {
                for pool in pyramid.level(level) {
                    if total == target {
                        break 'levels;
                    }
                    let mut fresh = 0;
                    for id in pool.sample_ids() {
                        if total + fresh == target {
                            break;
                        }
                        let s = dataset
                            .get(id)
                            .ok_or_else(|| Error::Invalid(format!("unknown sample id {id:?}")))?;
                        if seen.insert(dedup_key(s)) {
                            fresh += 1;
                        }
                    }
                    if fresh > 0 {
                        stream.push(StreamSegment {
                            pool_id: pool.pool_id().to_owned(),
                            pass: 0,
                            take: fresh,
                            shuffle_seed: derive_seed(seed, pool.pool_id()),
                        });
                        total += fresh;
                    }
                }
            }
            if total < target {
                let msg = format!(
                    "non-repetitive schedule truncated: {total} unique samples available, {target} requested (k = {k})"
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
            total
        }
    };
    Ok(ComputeSchedule {
        mode,
        k,
        stream,
        total,
        target,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KeepRange, OperatorConfig, Sample};
    use crate::pools::pyramid::build_pyramid;

    /// Sample i has a = i % 2, b = i % 3; texts are unique.
    fn setup(n: usize) -> (Dataset, Pyramid) {
        let d: Dataset = (0..n)
            .map(|i| {
                Sample::new(format!("s{i:04}"), format!("text {i}"))
                    .with_stat("a", (i % 2) as f64)
                    .with_stat("b", (i % 3) as f64)
            })
            .collect();
        let top = [
            OperatorConfig::new("a", KeepRange::new(0.0, 0.0).unwrap()),
            OperatorConfig::new("b", KeepRange::new(0.0, 0.0).unwrap()),
        ];
        let p = build_pyramid(&d, &top, 5).unwrap();
        (d, p)
    }

    #[test]
    fn repetitive_total_is_k_times_top() {
        let (d, p) = setup(60);
        let top = p.top_pool().unwrap().len();
        assert_eq!(top, 10);
        let s = schedule_compute(&p, &d, 3, ScheduleMode::Repetitive, 0).unwrap();
        assert_eq!(s.total, 30);
        assert_eq!(s.stream.len(), 3);
        let m = s.materialize(&p, &d).unwrap();
        assert_eq!(m.len(), 30);
        // passes are shuffled differently
        assert_ne!(m[..10], m[10..20]);
    }

    #[test]
    fn non_repetitive_matches_repetitive_total() {
        let (d, p) = setup(60);
        let s = schedule_compute(&p, &d, 3, ScheduleMode::NonRepetitive, 0).unwrap();
        assert_eq!(s.total, 30);
        assert!(s.warnings.is_empty());
        let m = s.materialize(&p, &d).unwrap();
        assert_eq!(m.len(), 30);
        let unique: HashSet<_> = m.iter().collect();
        assert_eq!(unique.len(), 30);
        assert_eq!(s.stream[0].pool_id, "pyramid:a+b");
    }

    #[test]
    fn non_repetitive_truncates_with_warning() {
        let (d, p) = setup(60);
        // union of a=0 and b=0 pools is 40 samples; 10 * 10 = 100 requested
        let s = schedule_compute(&p, &d, 10, ScheduleMode::NonRepetitive, 0).unwrap();
        assert_eq!(s.total, 40);
        assert!(s.is_truncated());
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn k_one_is_the_top_pool_in_both_modes() {
        let (d, p) = setup(60);
        let top: HashSet<String> = p.top_pool().unwrap().sample_ids().iter().cloned().collect();
        for mode in [ScheduleMode::Repetitive, ScheduleMode::NonRepetitive] {
            let s = schedule_compute(&p, &d, 1, mode, 0).unwrap();
            let m: HashSet<String> = s.materialize(&p, &d).unwrap().into_iter().collect();
            assert_eq!(m, top, "{mode}");
        }
    }

    #[test]
    fn empty_top_pool_is_rejected() {
        let d: Dataset = (0..3).map(|i| Sample::new(format!("{i}"), "t").with_stat("a", 5.0)).collect();
        let p = build_pyramid(&d, &[OperatorConfig::new("a", KeepRange::at_most(0.0).unwrap())], 5).unwrap();
        assert!(matches!(
            schedule_compute(&p, &d, 2, ScheduleMode::Repetitive, 0),
            Err(Error::EmptyPyramid)
        ));
        assert!(schedule_compute(&p, &d, 0, ScheduleMode::Repetitive, 0).is_err());
    }

    #[test]
    fn schedule_json_shape() {
        let (d, p) = setup(12);
        let s = schedule_compute(&p, &d, 2, ScheduleMode::Repetitive, 0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["mode"], "repetitive");
        assert_eq!(v["k"], 2);
        assert_eq!(v["total"], 4);
        assert_eq!(v["stream"][1]["pass"], 1);
    }
}
