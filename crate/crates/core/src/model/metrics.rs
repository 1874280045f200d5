use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Evaluation scores of one trained reference model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricVector {
    metrics: BTreeMap<String, f64>,
    trained_samples: u64,
    #[serde(rename = "wall_time_s")]
    wall_time: f64,
}

impl MetricVector {
    pub fn new(metrics: BTreeMap<String, f64>, trained_samples: u64, wall_time: f64) -> Result<Self> {
        if metrics.is_empty() {
            return Err(Error::Invalid("metric vector is empty".into()));
        }
        if let Some((name, v)) = metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!("metric {name:?} is not finite ({v})")));
        }
        if !wall_time.is_finite() || wall_time < 0.0 {
            return Err(Error::Invalid(format!("wall time {wall_time} is not a finite non-negative number")));
        }
        Ok(Self {
            metrics,
            trained_samples,
            wall_time,
        })
    }

    /// Convenience constructor for tests and examples.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(), 0, 0.0)
    }

    pub fn metrics(&self) -> &BTreeMap<String, f64> {
        &self.metrics
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn trained_samples(&self) -> u64 {
        self.trained_samples
    }

    pub fn wall_time(&self) -> f64 {
        self.wall_time
    }

    pub fn mean(&self) -> f64 {
        self.metrics.values().sum::<f64>() / self.metrics.len() as f64
    }
}

impl<'de> Deserialize<'de> for MetricVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            metrics: BTreeMap<String, f64>,
            #[serde(default)]
            trained_samples: u64,
            #[serde(default, rename = "wall_time_s")]
            wall_time: f64,
        }
        let raw = Raw::deserialize(d)?;
        MetricVector::new(raw.metrics, raw.trained_samples, raw.wall_time).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(MetricVector::new(BTreeMap::new(), 0, 0.0).is_err());
        assert!(MetricVector::from_pairs([("a", f64::INFINITY)]).is_err());
    }

    #[test]
    fn json_uses_protocol_field_names() {
        let m = MetricVector::new([("acc".to_string(), 0.5)].into(), 10, 0.1).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"metrics":{"acc":0.5},"trained_samples":10,"wall_time_s":0.1}"#);
        assert_eq!(serde_json::from_str::<MetricVector>(&json).unwrap(), m);
    }
}
