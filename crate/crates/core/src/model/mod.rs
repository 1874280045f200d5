//! Domain types shared across the sandbox.

mod ledger;
mod metrics;
mod pool;
mod recipe;
mod sample;

pub use ledger::{JobStatus, LedgerEntry, RunLedger};
pub use metrics::MetricVector;
pub use pool::{provenance_ranges, DataPool, PoolManifest, ProvenanceStep, SplitLabel};
pub use recipe::{KeepRange, OperatorConfig, Recipe, RecipeOrigin};
pub use sample::{validate_dataset, validate_file, Dataset, NonFiniteStat, Sample, ValidationReport};
