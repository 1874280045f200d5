use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` over a statistic value. Either end may be
/// infinite; the file form writes infinite ends as `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeepRange {
    lo: f64,
    hi: f64,
}

impl KeepRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidRange { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn full() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn at_least(lo: f64) -> Result<Self> {
        Self::new(lo, f64::INFINITY)
    }

    pub fn at_most(hi: f64) -> Result<Self> {
        Self::new(f64::NEG_INFINITY, hi)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

impl fmt::Display for KeepRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Serialize for KeepRange {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let end = |v: f64| v.is_finite().then_some(v);
        [end(self.lo), end(self.hi)].serialize(s)
    }
}

impl<'de> Deserialize<'de> for KeepRange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [lo, hi] = <[Option<f64>; 2]>::deserialize(d)?;
        KeepRange::new(lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))
            .map_err(serde::de::Error::custom)
    }
}

/// An operator with frozen parameters and keep range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub op_name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
    pub keep_range: KeepRange,
}

impl OperatorConfig {
    pub fn new(op_name: impl Into<String>, keep_range: KeepRange) -> Self {
        Self {
            op_name: op_name.into(),
            params: BTreeMap::new(),
            keep_range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecipeOrigin {
    TopK,
    ClusterRepresentative,
    Manual,
}

/// Ordered, non-empty list of operators applied as composed filters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recipe {
    ops: Vec<OperatorConfig>,
    origin_strategy: RecipeOrigin,
}

impl Recipe {
    pub fn new(ops: Vec<OperatorConfig>, origin_strategy: RecipeOrigin) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Invalid("a recipe needs at least one operator".into()));
        }
        let mut seen = HashSet::new();
        for op in &ops {
            if !seen.insert(op.op_name.as_str()) {
                return Err(Error::Invalid(format!("recipe lists operator {:?} twice", op.op_name)));
            }
        }
        Ok(Self { ops, origin_strategy })
    }

    pub fn ops(&self) -> &[OperatorConfig] {
        &self.ops
    }

    pub fn origin_strategy(&self) -> RecipeOrigin {
        self.origin_strategy
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `op_a+op_b+...` in application order.
    pub fn label(&self) -> String {
        self.ops.iter().map(|o| o.op_name.as_str()).collect::<Vec<_>>().join("+")
    }
}

impl<'de> Deserialize<'de> for Recipe {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            ops: Vec<OperatorConfig>,
            origin_strategy: RecipeOrigin,
        }
        let raw = Raw::deserialize(d)?;
        Recipe::new(raw.ops, raw.origin_strategy).map_err(serde::de::Error::custom)
    }
}
