use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Checks a trial's partial metric at `fraction` of its training against
/// the baseline. `delta` may be infinite to disable aborts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopPolicy {
    pub fraction: f64,
    pub delta: f64,
}

impl EarlyStopPolicy {
    pub fn new(fraction: f64, delta: f64) -> Result<Self> {
        let p = Self { fraction, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("early-stop fraction must lie in (0, 1], got {}", self.fraction)));
        }
        if self.delta.is_nan() || self.delta == f64::NEG_INFINITY {
            return Err(Error::Config(format!("early-stop margin must be a number, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopDecision {
    Continue,
    Abort,
}

/// Abort iff `partial < baseline - delta`; equality continues.
pub fn early_stop_check(partial: f64, baseline: f64, policy: &EarlyStopPolicy) -> EarlyStopDecision {
    if partial < baseline - policy.delta {
        EarlyStopDecision::Abort
    } else {
        EarlyStopDecision::Continue
    }
}
