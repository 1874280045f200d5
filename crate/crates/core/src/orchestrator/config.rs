use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Probe,
    Refine,
    Execute,
    Evaluate,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Probe, Phase::Refine, Phase::Execute, Phase::Evaluate];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Probe => "probe",
            Phase::Refine => "refine",
            Phase::Execute => "execute",
            Phase::Evaluate => "evaluate",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_parallel() -> usize {
    1
}

/// File form of a workflow.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowConfig {
    #[serde(default)]
    pub workdir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default)]
    pub registries: RegistriesConfig,
    #[serde(default)]
    pub phases: PhasesConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistriesConfig {
    /// Hooks run around every job, in this order.
    #[serde(default)]
    pub hooks: Vec<String>,
    /// Named trainer instances built by capability factories.
    #[serde(default)]
    pub trainers: BTreeMap<String, FactoryDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactoryDecl {
    pub factory: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasesConfig {
    #[serde(default)]
    pub probe: Vec<JobConfig>,
    #[serde(default)]
    pub refine: Vec<JobConfig>,
    #[serde(default)]
    pub execute: Vec<JobConfig>,
    #[serde(default)]
    pub evaluate: Vec<JobConfig>,
}

impl PhasesConfig {
    pub fn get(&self, phase: Phase) -> &[JobConfig] {
        match phase {
            Phase::Probe => &self.probe,
            Phase::Refine => &self.refine,
            Phase::Execute => &self.execute,
            Phase::Evaluate => &self.evaluate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub needs: Vec<String>,
}
