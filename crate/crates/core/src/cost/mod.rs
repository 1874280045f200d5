//! Sandbox economics: break-even of small-pool exploration against full
//! runs, the Hoeffding tail bound, and an α-scaled cost ledger.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Cost of one full-scale run.
    pub t_full: f64,
    /// Full-scale iterations the sandbox would replace (`M`).
    pub iterations: u32,
    /// Planned small-pool experiments (`m`).
    pub experiments: u32,
    /// Small-pool cost as a fraction of a full run (`r`).
    pub ratio: f64,
}

impl CostParams {
    pub fn new(t_full: f64, iterations: u32, experiments: u32, ratio: f64) -> Result<Self> {
        let p = Self {
            t_full,
            iterations,
            experiments,
            ratio,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_full.is_finite() && self.t_full > 0.0) {
            return Err(Error::Invalid(format!("t_full must be positive, got {}", self.t_full)));
        }
        if self.iterations < 1 {
            return Err(Error::Invalid("iterations must be at least 1".into()));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Invalid(format!("ratio must lie in (0, 1], got {}", self.ratio)));
        }
        Ok(())
    }

    pub fn t_pool(&self) -> f64 {
        self.ratio * self.t_full
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub cost_without: f64,
    pub cost_with: f64,
    /// `cost_with / cost_without`.
    pub ratio: f64,
    pub preferred: bool,
}

/// Compares `M` full runs against one full run plus `m` small-pool runs.
pub fn breakeven(params: &CostParams) -> Result<CostComparison> {
    params.validate()?;
    let factor = 1.0 + params.experiments as f64 * params.ratio;
    let m = params.iterations as f64;
    Ok(CostComparison {
        cost_without: m * params.t_full,
        cost_with: factor * params.t_full,
        ratio: factor / m,
        preferred: factor <= m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingParams {
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
}

impl HoeffdingParams {
    pub fn new(epsilon: f64, a: f64, b: f64) -> Self {
        Self { epsilon, a, b }
    }

    pub fn range(&self) -> f64 {
        self.b - self.a
    }
}

/// `exp(-2 ε² / (b - a)²)`, capped at 1.
pub fn hoeffding_bound(params: &HoeffdingParams) -> Result<f64> {
    let HoeffdingParams { epsilon, a, b } = *params;
    if !(epsilon.is_finite() && a.is_finite() && b.is_finite()) || epsilon < 0.0 {
        return Err(Error::Invalid(format!("bad Hoeffding parameters ε={epsilon}, a={a}, b={b}")));
    }
    if a > b {
        return Err(Error::Invalid(format!("Hoeffding range is inverted: a={a} > b={b}")));
    }
    if epsilon == 0.0 {
        return Ok(1.0);
    }
    if a == b {
        return Err(Error::Invalid("Hoeffding bound degenerates for an empty range with ε > 0".into()));
    }
    let range = b - a;
    Ok((-2.0 * epsilon * epsilon / (range * range)).exp().min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostUnit {
    Flops,
    Time,
}

/// Cost of one run. The absolute scale `α` stays symbolic: totals are
/// reported in α-units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedgerEntry {
    pub run_id: String,
    pub trained_samples: u64,
    pub per_sample_cost: f64,
    pub unit: CostUnit,
}

impl CostLedgerEntry {
    pub fn new(run_id: impl Into<String>, trained_samples: u64, per_sample_cost: f64, unit: CostUnit) -> Self {
        Self {
            run_id: run_id.into(),
            trained_samples,
            per_sample_cost,
            unit,
        }
    }

    pub fn alpha_units(&self) -> f64 {
        self.per_sample_cost * self.trained_samples as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTotals {
    pub alpha_units: BTreeMap<CostUnit, f64>,
    pub samples_per_run: BTreeMap<String, u64>,
}

impl CostTotals {
    pub fn total(&self, unit: CostUnit) -> f64 {
        self.alpha_units.get(&unit).copied().unwrap_or(0.0)
    }

    pub fn trained_samples(&self) -> u64 {
        self.samples_per_run.values().sum()
    }
}

pub fn ledger_total<'a, I>(entries: I) -> CostTotals
where
    I: IntoIterator<Item = &'a CostLedgerEntry>,
{
    let mut out = CostTotals::default();
    for e in entries {
        *out.alpha_units.entry(e.unit).or_insert(0.0) += e.alpha_units();
        *out.samples_per_run.entry(e.run_id.clone()).or_insert(0) += e.trained_samples;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingReport {
    pub epsilon: f64,
    pub range: [f64; 2],
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub cost_without: f64,
    pub cost_with: f64,
    pub ratio: f64,
    pub preferred: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hoeffding: Option<HoeffdingReport>,
}

pub fn cost_report(params: &CostParams, hoeffding: Option<&HoeffdingParams>) -> Result<CostReport> {
    let c = breakeven(params)?;
    let hoeffding = hoeffding
        .map(|h| {
            Ok::<_, Error>(HoeffdingReport {
                epsilon: h.epsilon,
                range: [h.a, h.b],
                bound: hoeffding_bound(h)?,
            })
        })
        .transpose()?;
    Ok(CostReport {
        cost_without: c.cost_without,
        cost_with: c.cost_with,
        ratio: c.ratio,
        preferred: c.preferred,
        hoeffding,
    })
}
