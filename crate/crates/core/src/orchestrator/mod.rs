//! Declarative workflows: YAML config, expansion into primitive jobs,
//! and execution with a run ledger.

mod config;
mod early_stop;
pub mod jobs;
mod plan;
mod registry;
mod run;

pub use config::{FactoryDecl, JobConfig, PhasesConfig, Phase, RegistriesConfig, WorkflowConfig};
pub use early_stop::{early_stop_check, EarlyStopDecision, EarlyStopPolicy};
pub use plan::{
    load_workflow, plan_from_config, plan_from_yaml, DatasetSource, Hyperparams, PlannedJob, PoolSource, RankInput,
    Task, TrainerEntry, WorkflowPlan,
};
pub use registry::{Hook, LogProgress, Registry, TrainerFactory};
pub use run::{
    dir_digest, input_digest, job_seed, ledger_statuses, run_workflow, write_reports, RunOptions, RunOutcome,
    SummaryRow, JOBS_DIR, LEDGER_FILE, REPORTS_DIR,
};
