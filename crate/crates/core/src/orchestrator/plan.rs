use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::ProposalStrategy;
use crate::cost::{CostLedgerEntry, CostParams, CostUnit, HoeffdingParams};
use crate::error::{Error, Result};
use crate::model::SplitLabel;
use crate::ops::{MapperParams, MapperRegistry, StatSpec};
use crate::orchestrator::config::{FactoryDecl, JobConfig, Phase, WorkflowConfig};
use crate::orchestrator::early_stop::EarlyStopPolicy;
use crate::orchestrator::registry::{Hook, Registry};
use crate::pools::{ScheduleMode, DEFAULT_MAX_PYRAMID_OPS, MAX_BUCKETS, MIN_BUCKETS};
use crate::trainer::Trainer;

pub type Hyperparams = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    File(PathBuf),
    Job(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSource {
    Job(String),
    /// Every sample of the dataset.
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankInput {
    pub op: String,
    /// Split pool jobs, lowest bucket first.
    pub pools: Vec<String>,
    /// Trial jobs matching `pools`.
    pub trials: Vec<String>,
}

/// A fully resolved unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    ComputeStats {
        dataset: DatasetSource,
        stats: Vec<StatSpec>,
    },
    Map {
        dataset: DatasetSource,
        mapper: String,
        params: MapperParams,
    },
    PoolSplit {
        dataset: DatasetSource,
        op: String,
        label: SplitLabel,
        buckets: usize,
        pool_size: Option<usize>,
    },
    PoolRandom {
        dataset: DatasetSource,
        pool_size: Option<usize>,
        buckets: usize,
    },
    Trial {
        dataset: DatasetSource,
        pool: PoolSource,
        trainer: String,
        hyperparams: Hyperparams,
        baseline: bool,
        early_stop: Option<EarlyStopPolicy>,
        baseline_trial: Option<String>,
        checkpoint_from: Option<String>,
    },
    Rank {
        baseline_trial: String,
        ops: Vec<RankInput>,
    },
    Correlate {
        dataset: DatasetSource,
        stats: Option<Vec<String>>,
        clusters: Option<usize>,
    },
    ProposeRecipes {
        ranking: String,
        clusters: Option<String>,
        strategy: ProposalStrategy,
        max_order: usize,
    },
    RecipeTrials {
        dataset: DatasetSource,
        recipes: String,
        trainer: String,
        hyperparams: Hyperparams,
        pool_size: Option<usize>,
    },
    Pyramid {
        dataset: DatasetSource,
        ranking: String,
        top: usize,
        max_ops: usize,
    },
    Scale {
        dataset: DatasetSource,
        pyramid: String,
        ks: Vec<usize>,
        mode: ScheduleMode,
        trainer: String,
        hyperparams: Hyperparams,
    },
    Diversity {
        dataset: DatasetSource,
        pools: Vec<String>,
        top_n: usize,
    },
    Cost {
        params: CostParams,
        hoeffding: Option<HoeffdingParams>,
        entries: Vec<CostLedgerEntry>,
        per_sample_cost: Option<f64>,
        unit: CostUnit,
    },
    SweepRank {
        points: Vec<String>,
        grid: Vec<Hyperparams>,
        baseline: usize,
    },
    Iteration {
        dataset: DatasetSource,
        index: usize,
        recipes: String,
        trainer: String,
        hyperparams: Hyperparams,
        pool_size: Option<usize>,
        previous: Option<String>,
    },
    Chain {
        iterations: Vec<String>,
    },
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::ComputeStats { .. } => "compute_stats",
            Task::Map { .. } => "map",
            Task::PoolSplit { .. } => "pool_split",
            Task::PoolRandom { .. } => "pool_random",
            Task::Trial { .. } => "trial",
            Task::Rank { .. } => "rank",
            Task::Correlate { .. } => "correlate",
            Task::ProposeRecipes { .. } => "propose_recipes",
            Task::RecipeTrials { .. } => "recipe_trials",
            Task::Pyramid { .. } => "pyramid",
            Task::Scale { .. } => "scale",
            Task::Diversity { .. } => "diversity",
            Task::Cost { .. } => "cost",
            Task::SweepRank { .. } => "sweep_rank",
            Task::Iteration { .. } => "iteration",
            Task::Chain { .. } => "chain",
        }
    }

    pub fn trainer(&self) -> Option<&str> {
        match self {
            Task::Trial { trainer, .. }
            | Task::RecipeTrials { trainer, .. }
            | Task::Scale { trainer, .. }
            | Task::Iteration { trainer, .. } => Some(trainer),
            _ => None,
        }
    }

    pub fn dataset(&self) -> Option<&DatasetSource> {
        match self {
            Task::ComputeStats { dataset, .. }
            | Task::Map { dataset, .. }
            | Task::PoolSplit { dataset, .. }
            | Task::PoolRandom { dataset, .. }
            | Task::Trial { dataset, .. }
            | Task::Correlate { dataset, .. }
            | Task::RecipeTrials { dataset, .. }
            | Task::Pyramid { dataset, .. }
            | Task::Scale { dataset, .. }
            | Task::Diversity { dataset, .. }
            | Task::Iteration { dataset, .. } => Some(dataset),
            _ => None,
        }
    }

    fn produces_dataset(&self) -> bool {
        matches!(self, Task::ComputeStats { .. } | Task::Map { .. })
    }

    fn produces_pools(&self) -> bool {
        matches!(self, Task::PoolSplit { .. } | Task::PoolRandom { .. } | Task::Pyramid { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedJob {
    pub id: String,
    pub phase: Phase,
    pub task: Task,
    pub needs: Vec<String>,
    /// Config job this one was expanded from, when different.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
}

impl PlannedJob {
    pub fn kind(&self) -> &'static str {
        self.task.kind()
    }
}

#[derive(Clone)]
pub struct TrainerEntry {
    pub decl: FactoryDecl,
    pub trainer: Arc<dyn Trainer>,
}

/// A validated, expanded workflow ready to run.
#[derive(Clone)]
pub struct WorkflowPlan {
    pub config_dir: PathBuf,
    pub workdir: Option<PathBuf>,
    pub seed: u64,
    pub max_parallel: usize,
    pub jobs: Vec<PlannedJob>,
    pub hooks: Vec<(String, Arc<dyn Hook>)>,
    pub trainers: BTreeMap<String, TrainerEntry>,
    pub mappers: MapperRegistry,
    pub warnings: Vec<String>,
}

impl std::fmt::Debug for WorkflowPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkflowPlan")
            .field("workdir", &self.workdir)
            .field("seed", &self.seed)
            .field("max_parallel", &self.max_parallel)
            .field("jobs", &self.jobs.iter().map(|j| &j.id).collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl WorkflowPlan {
    pub fn job(&self, id: &str) -> Option<&PlannedJob> {
        self.jobs.iter().find(|j| j.id == id)
    }

    pub fn phase_jobs(&self, phase: Phase) -> impl Iterator<Item = &PlannedJob> {
        self.jobs.iter().filter(move |j| j.phase == phase)
    }

    pub fn trainer(&self, name: &str) -> Result<&TrainerEntry> {
        self.trainers
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown trainer {name:?}")))
    }

    pub fn with_workdir(mut self, workdir: impl Into<PathBuf>) -> Self {
        self.workdir = Some(workdir.into());
        self
    }
}

/// Reads and resolves a YAML workflow file.
pub fn load_workflow(path: &Path, registry: &Registry) -> Result<WorkflowPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let config: WorkflowConfig =
        serde_yaml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    plan_from_config(&config, &base, registry)
}

pub fn plan_from_yaml(text: &str, base: &Path, registry: &Registry) -> Result<WorkflowPlan> {
    let config: WorkflowConfig = serde_yaml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    plan_from_config(&config, base, registry)
}

fn params<T: DeserializeOwned>(job: &JobConfig) -> Result<T> {
    let v = if job.params.is_null() {
        Value::Object(Default::default())
    } else {
        job.params.clone()
    };
    serde_json::from_value(v).map_err(|e| Error::Config(format!("job {:?} ({}): {e}", job.id, job.kind)))
}

fn three() -> usize {
    3
}

fn default_max_ops() -> usize {
    DEFAULT_MAX_PYRAMID_OPS
}

fn default_ks() -> Vec<usize> {
    vec![1, 2, 4, 8]
}

fn default_top_n() -> usize {
    20
}

fn one() -> usize {
    1
}

fn unit_cost() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ComputeStatsConfig {
    dataset: Option<PathBuf>,
    stats: Vec<StatSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapConfig {
    dataset: Option<PathBuf>,
    mapper: String,
    #[serde(default)]
    params: MapperParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolSplitConfig {
    dataset: Option<PathBuf>,
    op: String,
    label: SplitLabel,
    #[serde(default = "three")]
    buckets: usize,
    pool_size: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolRandomConfig {
    dataset: Option<PathBuf>,
    pool_size: Option<usize>,
    #[serde(default = "three")]
    buckets: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrialConfig {
    dataset: Option<PathBuf>,
    pool: Option<String>,
    trainer: String,
    #[serde(default)]
    hyperparams: Hyperparams,
    #[serde(default)]
    baseline: bool,
    early_stop: Option<EarlyStopPolicy>,
    baseline_trial: Option<String>,
    checkpoint_from: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeConfig {
    dataset: Option<PathBuf>,
    ops: Vec<String>,
    trainer: String,
    #[serde(default = "three")]
    buckets: usize,
    pool_size: Option<usize>,
    #[serde(default)]
    hyperparams: Hyperparams,
    early_stop: Option<EarlyStopPolicy>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrelateConfig {
    dataset: Option<PathBuf>,
    stats: Option<Vec<String>>,
    clusters: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposeConfig {
    ranking: String,
    clusters: Option<String>,
    #[serde(default = "top_k")]
    strategy: ProposalStrategy,
    #[serde(default = "three")]
    max_order: usize,
}

fn top_k() -> ProposalStrategy {
    ProposalStrategy::TopK
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeTrialsConfig {
    dataset: Option<PathBuf>,
    recipes: String,
    trainer: String,
    #[serde(default)]
    hyperparams: Hyperparams,
    pool_size: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PyramidConfig {
    dataset: Option<PathBuf>,
    ranking: String,
    #[serde(default = "three")]
    top: usize,
    #[serde(default = "default_max_ops")]
    max_ops: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleConfig {
    dataset: Option<PathBuf>,
    pyramid: String,
    #[serde(default = "default_ks")]
    ks: Vec<usize>,
    #[serde(default = "repetitive")]
    mode: ScheduleMode,
    trainer: String,
    #[serde(default)]
    hyperparams: Hyperparams,
}

fn repetitive() -> ScheduleMode {
    ScheduleMode::Repetitive
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiversityConfig {
    dataset: Option<PathBuf>,
    pools: Option<Vec<String>>,
    #[serde(default = "default_top_n")]
    top_n: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CostConfig {
    #[serde(default = "unit_cost")]
    t_full: f64,
    iterations: u32,
    experiments: u32,
    ratio: f64,
    hoeffding: Option<HoeffdingParams>,
    #[serde(default)]
    entries: Vec<CostLedgerEntry>,
    per_sample_cost: Option<f64>,
    #[serde(default = "flops")]
    unit: CostUnit,
}

fn flops() -> CostUnit {
    CostUnit::Flops
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    dataset: Option<PathBuf>,
    pool: Option<String>,
    trainer: String,
    grid: Vec<Hyperparams>,
    #[serde(default)]
    baseline: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IterateConfig {
    dataset: Option<PathBuf>,
    recipes: String,
    trainer: String,
    #[serde(default)]
    hyperparams: Hyperparams,
    #[serde(default = "one")]
    iterations: usize,
    pool_size: Option<usize>,
}

fn check_name(what: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} {name:?} must be non-empty ASCII letters, digits, '_', '-' or '.', not starting with '.'"
        )))
    }
}

fn check_buckets(job: &str, buckets: usize) -> Result<()> {
    if (MIN_BUCKETS..=MAX_BUCKETS).contains(&buckets) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "job {job:?}: buckets must lie in {MIN_BUCKETS}..={MAX_BUCKETS}, got {buckets}"
        )))
    }
}

struct Builder<'a> {
    base: &'a Path,
    registry: &'a Registry,
    trainers: &'a BTreeMap<String, TrainerEntry>,
    jobs: Vec<PlannedJob>,
    index: HashMap<String, usize>,
    warnings: Vec<String>,
}

impl Builder<'_> {
    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.base.join(p)
        } else {
            p.to_path_buf()
        }
    }

    fn existing(&self, owner: &str, id: &str) -> Result<&PlannedJob> {
        self.index
            .get(id)
            .map(|&i| &self.jobs[i])
            .ok_or_else(|| Error::Config(format!("job {owner:?} needs {id:?}, which is not declared before it")))
    }

    fn expect(&self, owner: &str, id: &str, kinds: &[&str]) -> Result<()> {
        let job = self.existing(owner, id)?;
        if kinds.contains(&job.kind()) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "job {owner:?} expects {id:?} to be one of {kinds:?}, but it is {:?}",
                job.kind()
            )))
        }
    }

    fn dataset(&self, owner: &str, needs: &[String], path: Option<&PathBuf>) -> Result<DatasetSource> {
        if let Some(p) = path {
            return Ok(DatasetSource::File(self.resolve_path(p)));
        }
        let producers: Vec<&String> = needs
            .iter()
            .filter(|n| self.index.get(*n).is_some_and(|&i| self.jobs[i].task.produces_dataset()))
            .collect();
        match producers.as_slice() {
            [one] => Ok(DatasetSource::Job((*one).clone())),
            [] => {
                if let Some(src) = needs.iter().find_map(|n| self.inherited(n)) {
                    return Ok(src);
                }
                Err(Error::Config(format!(
                    "job {owner:?} has no dataset: set params.dataset or depend on a compute_stats or map job"
                )))
            }
            _ => Err(Error::Config(format!(
                "job {owner:?} depends on several dataset jobs; set params.dataset to choose"
            ))),
        }
    }

    /// Dataset read by `id`, or failing that by its dependencies, depth
    /// first in `needs` order.
    fn inherited(&self, id: &str) -> Option<DatasetSource> {
        let job = &self.jobs[*self.index.get(id)?];
        job.task
            .dataset()
            .cloned()
            .or_else(|| job.needs.iter().find_map(|n| self.inherited(n)))
    }

    fn trainer(&self, owner: &str, name: &str) -> Result<()> {
        if self.trainers.contains_key(name) {
            Ok(())
        } else {
            Err(Error::Config(format!("job {owner:?} uses undeclared trainer {name:?}")))
        }
    }

    fn push(&mut self, phase: Phase, id: String, task: Task, mut needs: Vec<String>, origin: Option<&str>) -> Result<()> {
        check_name("job id", &id)?;
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateJob(id));
        }
        if let Some(DatasetSource::Job(d)) = task.dataset() {
            needs.push(d.clone());
        }
        let mut seen = HashSet::new();
        needs.retain(|n| seen.insert(n.clone()));
        for n in &needs {
            self.existing(&id, n)?;
        }
        self.index.insert(id.clone(), self.jobs.len());
        self.jobs.push(PlannedJob {
            id,
            phase,
            task,
            needs,
            origin: origin.map(str::to_owned),
        });
        Ok(())
    }

    fn add(&mut self, phase: Phase, cfg: &JobConfig) -> Result<()> {
        let id = cfg.id.clone();
        check_name("job id", &id)?;
        for n in &cfg.needs {
            self.existing(&id, n)?;
        }
        let mut needs = cfg.needs.clone();
        match cfg.kind.as_str() {
            "compute_stats" => {
                let p: ComputeStatsConfig = params(cfg)?;
                let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
                let mut stats = p.stats;
                for s in &mut stats {
                    check_name("stat name", &s.name)?;
                    s.resolve_paths(self.base);
                }
                self.push(phase, id, Task::ComputeStats { dataset, stats }, needs, None)
            }
            "map" => {
                let p: MapConfig = params(cfg)?;
                self.registry.mappers.get(&p.mapper).map_err(|e| Error::Config(format!("job {id:?}: {e}")))?;
                let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
                let task = Task::Map {
                    dataset,
                    mapper: p.mapper,
                    params: p.params,
                };
                self.push(phase, id, task, needs, None)
            }
            "pool_split" => {
                let p: PoolSplitConfig = params(cfg)?;
                check_buckets(&id, p.buckets)?;
                let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
                let task = Task::PoolSplit {
                    dataset,
                    op: p.op,
                    label: p.label,
                    buckets: p.buckets,
                    pool_size: p.pool_size,
                };
                self.push(phase, id, task, needs, None)
            }
            "pool_random" => {
                let p: PoolRandomConfig = params(cfg)?;
                check_buckets(&id, p.buckets)?;
                let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
                let task = Task::PoolRandom {
                    dataset,
                    pool_size: p.pool_size,
                    buckets: p.buckets,
                };
                self.push(phase, id, task, needs, None)
            }
            "trial" => {
                let p: TrialConfig = params(cfg)?;
                self.trainer(&id, &p.trainer)?;
                if let Some(pool) = &p.pool {
                    self.expect(&id, pool, &["pool_split", "pool_random"])?;
                    needs.push(pool.clone());
                }
                if let Some(b) = &p.baseline_trial {
                    self.expect(&id, b, &["trial"])?;
                    needs.push(b.clone());
                }
                if let Some(c) = &p.checkpoint_from {
                    self.expect(&id, c, &["trial", "iteration"])?;
                    needs.push(c.clone());
                }
                if let Some(es) = &p.early_stop {
                    es.validate()?;
                    if p.baseline_trial.is_none() {
                        return Err(Error::Config(format!("job {id:?}: early_stop needs baseline_trial")));
                    }
                }
                let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
                let task = Task::Trial {
                    dataset,
                    pool: p.pool.map_or(PoolSource::Dataset, PoolSource::Job),
                    trainer: p.trainer,
                    hyperparams: p.hyperparams,
                    baseline: p.baseline,
                    early_stop: p.early_stop,
                    baseline_trial: p.baseline_trial,
                    checkpoint_from: p.checkpoint_from,
                };
                self.push(phase, id, task, needs, None)
            }
            "probe" => self.add_probe(phase, cfg),
            "correlate" => {
                let p: CorrelateConfig = params(cfg)?;
                let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
                let task = Task::Correlate {
                    dataset,
                    stats: p.stats,
                    clusters: p.clusters,
                };
                self.push(phase, id, task, needs, None)
            }
            "propose_recipes" => {
                let p: ProposeConfig = params(cfg)?;
                self.expect(&id, &p.ranking, &["rank"])?;
                needs.push(p.ranking.clone());
                if let Some(c) = &p.clusters {
                    self.expect(&id, c, &["correlate"])?;
                    needs.push(c.clone());
                }
                if p.strategy == ProposalStrategy::ClusterRepresentative && p.clusters.is_none() {
                    return Err(Error::Config(format!(
                        "job {id:?}: cluster-representative proposals need a correlate job in params.clusters"
                    )));
                }
                let task = Task::ProposeRecipes {
                    ranking: p.ranking,
                    clusters: p.clusters,
                    strategy: p.strategy,
                    max_order: p.max_order,
                };
                self.push(phase, id, task, needs, None)
            }
            "recipe_trials" => {
                let p: RecipeTrialsConfig = params(cfg)?;
                self.trainer(&id, &p.trainer)?;
                self.expect(&id, &p.recipes, &["propose_recipes"])?;
                needs.push(p.recipes.clone());
                let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
                let task = Task::RecipeTrials {
                    dataset,
                    recipes: p.recipes,
                    trainer: p.trainer,
                    hyperparams: p.hyperparams,
                    pool_size: p.pool_size,
                };
                self.push(phase, id, task, needs, None)
            }
            "pyramid" => {
                let p: PyramidConfig = params(cfg)?;
                self.expect(&id, &p.ranking, &["rank"])?;
                needs.push(p.ranking.clone());
                if p.top == 0 || p.top > p.max_ops {
                    return Err(Error::Config(format!(
                        "job {id:?}: pyramid top must lie in 1..={}, got {}",
                        p.max_ops, p.top
                    )));
                }
                let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
                let task = Task::Pyramid {
                    dataset,
                    ranking: p.ranking,
                    top: p.top,
                    max_ops: p.max_ops,
                };
                self.push(phase, id, task, needs, None)
            }
            "scale" => {
                let p: ScaleConfig = params(cfg)?;
                self.trainer(&id, &p.trainer)?;
                self.expect(&id, &p.pyramid, &["pyramid"])?;
                needs.push(p.pyramid.clone());
                if p.ks.is_empty() || p.ks.contains(&0) {
                    return Err(Error::Config(format!("job {id:?}: ks must be non-empty positive integers")));
                }
                let mut ks = p.ks;
                ks.sort_unstable();
                ks.dedup();
                let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
                let task = Task::Scale {
                    dataset,
                    pyramid: p.pyramid,
                    ks,
                    mode: p.mode,
                    trainer: p.trainer,
                    hyperparams: p.hyperparams,
                };
                self.push(phase, id, task, needs, None)
            }
            "diversity" => {
                let p: DiversityConfig = params(cfg)?;
                let pools = match p.pools {
                    Some(pools) => pools,
                    None => cfg
                        .needs
                        .iter()
                        .filter(|n| self.index.get(*n).is_some_and(|&i| self.jobs[i].task.produces_pools()))
                        .cloned()
                        .collect(),
                };
                for pool in &pools {
                    self.expect(&id, pool, &["pool_split", "pool_random", "pyramid"])?;
                }
                needs.extend(pools.iter().cloned());
                let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
                let task = Task::Diversity {
                    dataset,
                    pools,
                    top_n: p.top_n,
                };
                self.push(phase, id, task, needs, None)
            }
            "cost" => {
                let p: CostConfig = params(cfg)?;
                let cost = CostParams::new(p.t_full, p.iterations, p.experiments, p.ratio)
                    .map_err(|e| Error::Config(format!("job {id:?}: {e}")))?;
                let task = Task::Cost {
                    params: cost,
                    hoeffding: p.hoeffding,
                    entries: p.entries,
                    per_sample_cost: p.per_sample_cost,
                    unit: p.unit,
                };
                self.push(phase, id, task, needs, None)
            }
            "sweep" => self.add_sweep(phase, cfg),
            "iterate" => self.add_iterate(phase, cfg),
            other => Err(Error::Config(format!("job {id:?} has unknown kind {other:?}"))),
        }
    }

    fn add_probe(&mut self, phase: Phase, cfg: &JobConfig) -> Result<()> {
        let p: ProbeConfig = params(cfg)?;
        let id = &cfg.id;
        self.trainer(id, &p.trainer)?;
        check_buckets(id, p.buckets)?;
        if p.ops.is_empty() {
            return Err(Error::Config(format!("job {id:?}: probe needs at least one op")));
        }
        let mut seen = HashSet::new();
        for op in &p.ops {
            check_name("op name", op)?;
            if !seen.insert(op) {
                return Err(Error::Config(format!("job {id:?} lists op {op:?} twice")));
            }
        }
        if let Some(es) = &p.early_stop {
            es.validate()?;
        }
        let dataset = self.dataset(&cfg.id, &cfg.needs, p.dataset.as_ref())?;
        let origin = Some(id.as_str());
        let trial = |pool: &str, baseline: bool, baseline_trial: Option<String>| Task::Trial {
            dataset: dataset.clone(),
            pool: PoolSource::Job(pool.to_owned()),
            trainer: p.trainer.clone(),
            hyperparams: p.hyperparams.clone(),
            baseline,
            early_stop: if baseline { None } else { p.early_stop },
            baseline_trial,
            checkpoint_from: None,
        };

        let random_pool = format!("{id}.pool.random");
        let random_trial = format!("{id}.trial.random");
        self.push(
            phase,
            random_pool.clone(),
            Task::PoolRandom {
                dataset: dataset.clone(),
                pool_size: p.pool_size,
                buckets: p.buckets,
            },
            cfg.needs.clone(),
            origin,
        )?;
        self.push(
            phase,
            random_trial.clone(),
            trial(&random_pool, true, None),
            vec![random_pool.clone()],
            origin,
        )?;
        let mut inputs = Vec::new();
        for op in &p.ops {
            let mut pools = Vec::new();
            let mut trials = Vec::new();
            for b in 0..p.buckets {
                let label = SplitLabel::for_bucket(b, p.buckets);
                let pool_id = format!("{id}.pool.{op}.{label}");
                let trial_id = format!("{id}.trial.{op}.{label}");
                self.push(
                    phase,
                    pool_id.clone(),
                    Task::PoolSplit {
                        dataset: dataset.clone(),
                        op: op.clone(),
                        label,
                        buckets: p.buckets,
                        pool_size: p.pool_size,
                    },
                    cfg.needs.clone(),
                    origin,
                )?;
                let mut needs = vec![pool_id.clone()];
                let baseline_trial = p.early_stop.map(|_| {
                    needs.push(random_trial.clone());
                    random_trial.clone()
                });
                self.push(phase, trial_id.clone(), trial(&pool_id, false, baseline_trial), needs, origin)?;
                pools.push(pool_id);
                trials.push(trial_id);
            }
            inputs.push(RankInput {
                op: op.clone(),
                pools,
                trials,
            });
        }
        let mut needs = vec![random_trial.clone()];
        for r in &inputs {
            needs.extend(r.pools.iter().cloned());
            needs.extend(r.trials.iter().cloned());
        }
        self.push(
            phase,
            id.clone(),
            Task::Rank {
                baseline_trial: random_trial,
                ops: inputs,
            },
            needs,
            None,
        )
    }

    fn add_sweep(&mut self, phase: Phase, cfg: &JobConfig) -> Result<()> {
        let p: SweepConfig = params(cfg)?;
        let id = &cfg.id;
        self.trainer(id, &p.trainer)?;
        if p.grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut grid: Vec<Hyperparams> = Vec::new();
        let mut baseline = None;
        for (i, point) in p.grid.iter().enumerate() {
            match grid.iter().position(|g| g == point) {
                Some(j) => {
                    let msg = format!("sweep {id:?}: grid point {i} duplicates point {j} and is dropped");
                    log::warn!("{msg}");
                    self.warnings.push(msg);
                    if i == p.baseline {
                        baseline = Some(j);
                    }
                }
                None => {
                    if i == p.baseline {
                        baseline = Some(grid.len());
                    }
                    grid.push(point.clone());
                }
            }
        }
        let baseline = baseline.ok_or_else(|| {
            Error::Config(format!("sweep {id:?}: baseline index {} is outside the grid", p.baseline))
        })?;
        let mut needs = cfg.needs.clone();
        if let Some(pool) = &p.pool {
            self.expect(id, pool, &["pool_split", "pool_random"])?;
            needs.push(pool.clone());
        }
        let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
        let mut points = Vec::new();
        for (i, hp) in grid.iter().enumerate() {
            let point_id = format!("{id}.point{i}");
            let task = Task::Trial {
                dataset: dataset.clone(),
                pool: p.pool.clone().map_or(PoolSource::Dataset, PoolSource::Job),
                trainer: p.trainer.clone(),
                hyperparams: hp.clone(),
                baseline: i == baseline,
                early_stop: None,
                baseline_trial: None,
                checkpoint_from: None,
            };
            self.push(phase, point_id.clone(), task, needs.clone(), Some(id))?;
            points.push(point_id);
        }
        let task = Task::SweepRank {
            points: points.clone(),
            grid,
            baseline,
        };
        self.push(phase, id.clone(), task, points, None)
    }

    fn add_iterate(&mut self, phase: Phase, cfg: &JobConfig) -> Result<()> {
        let p: IterateConfig = params(cfg)?;
        let id = &cfg.id;
        self.trainer(id, &p.trainer)?;
        self.expect(id, &p.recipes, &["propose_recipes"])?;
        if p.iterations == 0 {
            return Err(Error::Chain(format!("iterate {id:?} needs at least one iteration")));
        }
        if p.iterations > 1 && !self.trainers[&p.trainer].trainer.supports_checkpoints() {
            return Err(Error::Chain(format!(
                "iterate {id:?}: trainer {:?} cannot pass checkpoints between iterations",
                p.trainer
            )));
        }
        let mut needs = cfg.needs.clone();
        needs.push(p.recipes.clone());
        let dataset = self.dataset(&cfg.id, &needs, p.dataset.as_ref())?;
        let mut ids = Vec::new();
        for t in 1..=p.iterations {
            let iter_id = format!("{id}.iter{t}");
            let previous = ids.last().cloned();
            let mut n = needs.clone();
            n.extend(previous.iter().cloned());
            let task = Task::Iteration {
                dataset: dataset.clone(),
                index: t,
                recipes: p.recipes.clone(),
                trainer: p.trainer.clone(),
                hyperparams: p.hyperparams.clone(),
                pool_size: p.pool_size,
                previous,
            };
            self.push(phase, iter_id.clone(), task, n, Some(id))?;
            ids.push(iter_id);
        }
        self.push(phase, id.clone(), Task::Chain { iterations: ids.clone() }, ids, None)
    }
}

/// Validates and expands a parsed config. Every hook, trainer factory and
/// mapper it names must be registered; job ids must be unique and `needs`
/// may only name jobs declared earlier.
pub fn plan_from_config(config: &WorkflowConfig, base: &Path, registry: &Registry) -> Result<WorkflowPlan> {
    if config.max_parallel == 0 {
        return Err(Error::Config("max_parallel must be at least 1".into()));
    }
    let hooks = config
        .registries
        .hooks
        .iter()
        .map(|h| Ok((h.clone(), registry.hook(h)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut trainers = BTreeMap::new();
    for (name, decl) in &config.registries.trainers {
        check_name("trainer name", name)?;
        let factory = registry.trainer_factory(&decl.factory)?;
        let trainer = factory(&decl.params, base)?;
        trainers.insert(
            name.clone(),
            TrainerEntry {
                decl: decl.clone(),
                trainer,
            },
        );
    }
    let mut b = Builder {
        base,
        registry,
        trainers: &trainers,
        jobs: Vec::new(),
        index: HashMap::new(),
        warnings: Vec::new(),
    };
    for phase in Phase::ALL {
        for job in config.phases.get(phase) {
            b.add(phase, job)?;
        }
    }
    let Builder { jobs, warnings, .. } = b;
    Ok(WorkflowPlan {
        config_dir: base.to_path_buf(),
        workdir: config.workdir.as_ref().map(|w| if w.is_relative() { base.join(w) } else { w.clone() }),
        seed: config.seed,
        max_parallel: config.max_parallel,
        jobs,
        hooks,
        trainers,
        mappers: registry.mappers.clone(),
        warnings,
    })
}
