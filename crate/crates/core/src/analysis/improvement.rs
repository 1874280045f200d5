use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MetricVector;

/// Optional per-metric rescaling applied to both vectors before the
/// relative change is taken.
pub type MetricNormalizer<'a> = &'a dyn Fn(&str, f64) -> f64;

/// `100 * Σ(s_i - b_i) / Σ b_i` over the shared metric names.
pub fn relative_improvement(s: &MetricVector, baseline: &MetricVector) -> Result<f64> {
    relative_improvement_with(s, baseline, None)
}

pub fn relative_improvement_with(
    s: &MetricVector,
    baseline: &MetricVector,
    normalizer: Option<MetricNormalizer<'_>>,
) -> Result<f64> {
    if !s.metrics().keys().eq(baseline.metrics().keys()) {
        return Err(Error::MetricMismatch {
            left: s.metrics().keys().cloned().collect(),
            right: baseline.metrics().keys().cloned().collect(),
        });
    }
    let norm = |name: &str, v: f64| normalizer.map_or(v, |f| f(name, v));
    let mut diff = 0.0;
    let mut base = 0.0;
    for ((name, &v), &b) in s.metrics().iter().zip(baseline.metrics().values()) {
        let (v, b) = (norm(name, v), norm(name, b));
        diff += v - b;
        base += b;
    }
    if base == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    let out = 100.0 * diff / base;
    if !out.is_finite() {
        return Err(Error::Invalid(format!("relative improvement is not finite ({out})")));
    }
    Ok(out)
}

/// Metrics of one trained pool within an experiment group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub pool_id: String,
    pub metrics: MetricVector,
    #[serde(default)]
    pub baseline: bool,
}

impl TrialResult {
    pub fn new(pool_id: impl Into<String>, metrics: MetricVector, baseline: bool) -> Self {
        Self {
            pool_id: pool_id.into(),
            metrics,
            baseline,
        }
    }
}

/// Relative change of every non-baseline trial against the group's single
/// baseline, in input order.
pub fn changes_against_baseline(trials: &[TrialResult]) -> Result<Vec<(String, f64)>> {
    let mut baselines = trials.iter().filter(|t| t.baseline);
    let base = baselines
        .next()
        .ok_or_else(|| Error::Invalid("experiment group has no baseline trial".into()))?;
    if let Some(extra) = baselines.next() {
        return Err(Error::Invalid(format!(
            "experiment group has more than one baseline ({:?} and {:?})",
            base.pool_id, extra.pool_id
        )));
    }
    trials
        .iter()
        .filter(|t| !t.baseline)
        .map(|t| Ok((t.pool_id.clone(), relative_improvement(&t.metrics, &base.metrics)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mv(values: &[f64]) -> MetricVector {
        MetricVector::new(
            values.iter().enumerate().map(|(i, v)| (format!("m{i}"), *v)).collect(),
            0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn equal_uplift() {
        let r = relative_improvement(&mv(&[55.0, 55.0]), &mv(&[50.0, 50.0])).unwrap();
        assert!((r - 10.0).abs() < 1e-12);
    }

    #[test]
    fn identity_is_zero() {
        assert_eq!(relative_improvement(&mv(&[3.0, 7.0]), &mv(&[3.0, 7.0])).unwrap(), 0.0);
    }

    #[test]
    fn gains_cancel() {
        // (3 - 2) + (1 - 2) = 0
        assert_eq!(relative_improvement(&mv(&[3.0, 1.0]), &mv(&[2.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn mismatch_and_zero_baseline() {
        let a = MetricVector::from_pairs([("x", 1.0)]).unwrap();
        let b = MetricVector::from_pairs([("y", 1.0)]).unwrap();
        assert!(matches!(relative_improvement(&a, &b), Err(Error::MetricMismatch { .. })));
        assert!(matches!(
            relative_improvement(&mv(&[1.0, 1.0]), &mv(&[1.0, -1.0])),
            Err(Error::ZeroBaseline)
        ));
    }

    #[test]
    fn normalizer_hook() {
        let s = MetricVector::from_pairs([("a", 2.0), ("b", 200.0)]).unwrap();
        let b = MetricVector::from_pairs([("a", 1.0), ("b", 100.0)]).unwrap();
        let per_metric = |name: &str, v: f64| if name == "b" { v / 100.0 } else { v };
        let r = relative_improvement_with(&s, &b, Some(&per_metric)).unwrap();
        assert!((r - 100.0).abs() < 1e-12);
    }

    #[test]
    fn one_baseline_per_group() {
        let t = |id: &str, v: f64, base| TrialResult::new(id, mv(&[v]), base);
        let changes = changes_against_baseline(&[t("r", 10.0, true), t("lo", 11.0, false), t("hi", 9.0, false)]).unwrap();
        assert_eq!(changes[0].0, "lo");
        assert!((changes[0].1 - 10.0).abs() < 1e-12);
        assert!((changes[1].1 + 10.0).abs() < 1e-12);
        assert!(changes_against_baseline(&[t("lo", 1.0, false)]).is_err());
        assert!(changes_against_baseline(&[t("a", 1.0, true), t("b", 1.0, true)]).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariant(
            pairs in prop::collection::vec((0.1f64..100.0, 0.1f64..100.0), 1..8),
            lambda in 0.01f64..100.0,
        ) {
            let s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let r = relative_improvement(&mv(&s), &mv(&b)).unwrap();
            let scaled = |v: &[f64]| mv(&v.iter().map(|x| x * lambda).collect::<Vec<_>>());
            let r2 = relative_improvement(&scaled(&s), &scaled(&b)).unwrap();
            prop_assert!((r - r2).abs() <= 1e-9 * r.abs().max(1.0));
        }
    }
}
