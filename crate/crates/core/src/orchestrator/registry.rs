use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{LedgerEntry, RunLedger};
use crate::ops::MapperRegistry;
use crate::orchestrator::plan::PlannedJob;
use crate::trainer::{ExternalTrainer, PlantedSignalSpec, SyntheticTrainer, Trainer};

/// Behavior attached around every job. Hooks run on the coordinating
/// thread; an error from `pre_job` fails the job.
pub trait Hook: Send + Sync {
    fn pre_job(&self, _job: &PlannedJob, _ledger: &RunLedger) -> Result<()> {
        Ok(())
    }

    fn post_job(&self, _job: &PlannedJob, _entry: &LedgerEntry, _ledger: &RunLedger) -> Result<()> {
        Ok(())
    }
}

/// Logs each job's start and outcome.
pub struct LogProgress;

impl Hook for LogProgress {
    fn pre_job(&self, job: &PlannedJob, _: &RunLedger) -> Result<()> {
        log::info!("[{}] start {} ({})", job.phase, job.id, job.kind());
        Ok(())
    }

    fn post_job(&self, job: &PlannedJob, entry: &LedgerEntry, ledger: &RunLedger) -> Result<()> {
        log::info!(
            "[{}] {} -> {:?} ({} ledger entries)",
            job.phase,
            job.id,
            entry.status,
            ledger.len()
        );
        Ok(())
    }
}

/// Builds a trainer from its declared params. `base` is the config
/// file's directory, for resolving relative paths.
pub type TrainerFactory = Arc<dyn Fn(&Value, &Path) -> Result<Arc<dyn Trainer>> + Send + Sync>;

/// Named hooks, trainer factories and mappers available to workflows.
#[derive(Clone)]
pub struct Registry {
    hooks: BTreeMap<String, Arc<dyn Hook>>,
    trainers: BTreeMap<String, TrainerFactory>,
    pub mappers: MapperRegistry,
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register_hook("log_progress", Arc::new(LogProgress));
        r.register_trainer(
            "synthetic",
            Arc::new(|params, _| {
                let spec: PlantedSignalSpec = serde_json::from_value(params.clone())
                    .map_err(|e| Error::Config(format!("synthetic trainer params: {e}")))?;
                Ok(Arc::new(SyntheticTrainer::new(spec)?) as Arc<dyn Trainer>)
            }),
        );
        r.register_trainer(
            "external",
            Arc::new(|params, base| {
                let mut t: ExternalTrainer = serde_json::from_value(params.clone())
                    .map_err(|e| Error::Config(format!("external trainer params: {e}")))?;
                if t.command.is_empty() {
                    return Err(Error::Config("external trainer command is empty".into()));
                }
                // a relative program path with a separator is taken from the config directory
                if t.command[0].contains('/') && Path::new(&t.command[0]).is_relative() {
                    t.command[0] = base.join(&t.command[0]).display().to_string();
                }
                Ok(Arc::new(t) as Arc<dyn Trainer>)
            }),
        );
        r.mappers = MapperRegistry::default();
        r
    }
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            hooks: BTreeMap::new(),
            trainers: BTreeMap::new(),
            mappers: MapperRegistry::empty(),
        }
    }

    pub fn register_hook(&mut self, name: impl Into<String>, hook: Arc<dyn Hook>) {
        self.hooks.insert(name.into(), hook);
    }

    pub fn register_trainer(&mut self, name: impl Into<String>, factory: TrainerFactory) {
        self.trainers.insert(name.into(), factory);
    }

    pub fn hook(&self, name: &str) -> Result<Arc<dyn Hook>> {
        self.hooks.get(name).cloned().ok_or_else(|| Error::UnknownHook(name.to_owned()))
    }

    pub fn trainer_factory(&self, name: &str) -> Result<&TrainerFactory> {
        self.trainers.get(name).ok_or_else(|| Error::UnknownFactory(name.to_owned()))
    }

    pub fn hook_names(&self) -> impl Iterator<Item = &str> {
        self.hooks.keys().map(String::as_str)
    }
}
