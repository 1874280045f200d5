//! Reference-model adapters: turn a pool into a [`MetricVector`].
//!
//! [`SyntheticTrainer`] scores pools from their statistics with a planted
//! signal, for desk-scale verification. [`ExternalTrainer`] hands a
//! manifest to a separate process and reads back its metrics file.

mod external;
mod synthetic;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::Result;
use crate::model::{DataPool, Dataset, MetricVector};

pub use external::{external_train_eval, parse_metrics_file, ExternalTrainer, MetricsFile, TrainerManifest};
pub use synthetic::{synthetic_train_eval, PlantedSignalSpec, SyntheticTrainer};

/// Everything a trainer needs for one trial. `workdir` belongs to this
/// trial alone.
#[derive(Debug, Clone, Copy)]
pub struct TrainRequest<'a> {
    pub pool: &'a DataPool,
    pub dataset: &'a Dataset,
    /// Where `dataset` lives on disk, if it does.
    pub dataset_path: Option<&'a Path>,
    pub hyperparams: &'a BTreeMap<String, Value>,
    pub seed: u64,
    pub checkpoint_in: Option<&'a Path>,
    pub workdir: &'a Path,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub metrics: MetricVector,
    pub checkpoint_out: Option<PathBuf>,
}

pub trait Trainer: Send + Sync {
    fn name(&self) -> &str;

    fn train_eval(&self, request: &TrainRequest<'_>) -> Result<TrainOutcome>;

    /// Metrics after training on the first `fraction` of the pool, when the
    /// trainer can report them. Early stopping is inert without this.
    fn partial_eval(&self, _request: &TrainRequest<'_>, _fraction: f64) -> Result<Option<MetricVector>> {
        Ok(None)
    }

    /// Whether checkpoints can be threaded between iterations.
    fn supports_checkpoints(&self) -> bool {
        false
    }
}
