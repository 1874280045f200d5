//! Executors for each job kind. A job reads its inputs from the finished
//! directories of its dependencies and writes its artifacts into `out`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{
    diversity_report, rank_ops, relative_improvement, stat_correlations, ward_cluster, ClusterAssignment,
    ClusterInput, OpRankRow,
};
use crate::cost::{cost_report, ledger_total, CostLedgerEntry, CostReport, CostTotals};
use crate::digest::derive_seed;
use crate::error::{Error, Result};
use crate::model::{DataPool, Dataset, JobStatus, MetricVector, Recipe, SplitLabel};
use crate::ops::{apply_mapper, compute_stats};
use crate::orchestrator::early_stop::{early_stop_check, EarlyStopDecision, EarlyStopPolicy};
use crate::orchestrator::plan::{DatasetSource, Hyperparams, PlannedJob, PoolSource, Task, WorkflowPlan};
use crate::pools::{
    build_pyramid, compose_recipe, sample_random_control, schedule_compute, split_buckets, BoundaryBook, Pyramid,
    PyramidSpec, ScheduleMode, SplitBoundaries, SplitOutcome,
};
use crate::reports::{
    emit_correlation, emit_ranking, emit_recipe_ranking, emit_scaling_curve, emit_sweep, json_bytes, RecipeResult,
    ScalingPoint, SweepPoint,
};
use crate::trainer::{TrainOutcome, TrainRequest};

/// Files every job may write that are excluded from its output digest.
pub const TIMING_FILE: &str = "timing.json";
pub const SCRATCH_DIR: &str = "scratch";

type SplitKey = (PathBuf, String, usize, usize, u64);

/// Loaded datasets and their bucket splits, shared across jobs of one run.
#[derive(Default)]
pub struct DatasetCache {
    inner: Mutex<HashMap<PathBuf, Arc<Dataset>>>,
    splits: Mutex<HashMap<SplitKey, Arc<SplitOutcome>>>,
}

impl DatasetCache {
    pub fn load(&self, path: &Path) -> Result<Arc<Dataset>> {
        if let Some(d) = self.inner.lock().expect("dataset cache poisoned").get(path) {
            return Ok(d.clone());
        }
        let d = Arc::new(Dataset::read_jsonl(path)?);
        self.inner
            .lock()
            .expect("dataset cache poisoned")
            .insert(path.to_path_buf(), d.clone());
        Ok(d)
    }

    /// [`split_buckets`] over the dataset at `path`, computed once per run
    /// for all sibling buckets.
    pub fn split(&self, path: &Path, op: &str, buckets: usize, size: usize, seed: u64) -> Result<Arc<SplitOutcome>> {
        let key = (path.to_path_buf(), op.to_owned(), buckets, size, seed);
        if let Some(s) = self.splits.lock().expect("split cache poisoned").get(&key) {
            return Ok(s.clone());
        }
        let d = self.load(path)?;
        let s = Arc::new(split_buckets(&d, op, buckets, size, seed)?);
        self.splits.lock().expect("split cache poisoned").insert(key, s.clone());
        Ok(s)
    }
}

pub struct JobContext<'a> {
    pub plan: &'a WorkflowPlan,
    pub jobs_dir: &'a Path,
    pub datasets: &'a DatasetCache,
    /// Seed of this job, derived from the run seed and the job id.
    pub seed: u64,
}

impl JobContext<'_> {
    fn dir(&self, job: &str) -> PathBuf {
        self.jobs_dir.join(job)
    }

    fn dataset_path(&self, src: &DatasetSource) -> PathBuf {
        match src {
            DatasetSource::File(p) => p.clone(),
            DatasetSource::Job(id) => self.dir(id).join("dataset.jsonl"),
        }
    }

    fn dataset(&self, src: &DatasetSource) -> Result<(Arc<Dataset>, PathBuf)> {
        let path = self.dataset_path(src);
        Ok((self.datasets.load(&path)?, path))
    }

    fn read<T: DeserializeOwned>(&self, job: &str, file: &str) -> Result<T> {
        read_json(&self.dir(job).join(file))
    }

    fn pool(&self, job: &str) -> Result<DataPool> {
        DataPool::read_manifest(&self.dir(job).join("pool.json"))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path.display().to_string(), e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, file: &str, value: &T) -> Result<()> {
    write(&dir.join(file), &json_bytes(value))
}

/// Outcome of an executed job, beyond the files it wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct JobReport {
    pub status: JobStatus,
    pub note: Option<String>,
}

impl JobReport {
    fn completed() -> Self {
        Self {
            status: JobStatus::Completed,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopRecord {
    pub fraction: f64,
    pub delta: f64,
    pub partial_mean: f64,
    pub baseline_mean: f64,
    pub aborted: bool,
}

/// `result.json` of a trial. Wall time lives in `timing.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub pool_id: String,
    pub pool_size: usize,
    pub baseline: bool,
    pub metrics: BTreeMap<String, f64>,
    pub trained_samples: u64,
    /// Relative to the job directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<EarlyStopRecord>,
}

impl TrialRecord {
    pub fn metric_vector(&self) -> Result<MetricVector> {
        MetricVector::new(self.metrics.clone(), self.trained_samples, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidRecord {
    pub spec: PyramidSpec,
    /// Manifest path per pool, relative to the job directory, in entry order.
    pub pools: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub recipe: String,
    pub pool_size: usize,
    pub metrics: BTreeMap<String, f64>,
    pub mean: f64,
    pub trained_samples: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub iterations: Vec<IterationRecord>,
    /// Mean metric per iteration, in order.
    pub trajectory: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub report: CostReport,
    pub totals: CostTotals,
    pub entries: Vec<CostLedgerEntry>,
}

#[derive(Serialize)]
struct Timing {
    wall_time_s: f64,
}

/// Runs `job`, writing its artifacts into `out` (which exists and is
/// empty apart from `scratch/`).
pub fn execute(ctx: &JobContext<'_>, job: &PlannedJob, out: &Path) -> Result<JobReport> {
    match &job.task {
        Task::ComputeStats { dataset, stats } => {
            let (d, _) = ctx.dataset(dataset)?;
            compute_stats(&d, stats)?.write_jsonl(&out.join("dataset.jsonl"))?;
            Ok(JobReport::completed())
        }
        Task::Map { dataset, mapper, params } => {
            let (d, _) = ctx.dataset(dataset)?;
            apply_mapper(&d, &ctx.plan.mappers, mapper, params)?.write_jsonl(&out.join("dataset.jsonl"))?;
            Ok(JobReport::completed())
        }
        Task::PoolSplit {
            dataset,
            op,
            label,
            buckets,
            pool_size,
        } => {
            let (d, path) = ctx.dataset(dataset)?;
            let size = pool_size.unwrap_or(d.len() / buckets).max(1);
            // sibling buckets share the run seed so their draws agree
            let split = ctx.datasets.split(&path, op, *buckets, size, ctx.plan.seed)?;
            let i = split.boundaries.bucket_of(*label)?;
            let pool = split.pools[i].clone().with_id(&job.id);
            pool.write_manifest(out, "pool")?;
            write_json(out, "boundaries.json", &split.boundaries)?;
            let note = split
                .short_pools
                .iter()
                .find(|s| s.pool_id == format!("{op}/{label}"))
                .map(|s| format!("short pool: {} of {} samples", s.actual, s.declared));
            if let Some(n) = &note {
                log::warn!("{}: {n}", job.id);
            }
            Ok(JobReport {
                status: JobStatus::Completed,
                note,
            })
        }
        Task::PoolRandom {
            dataset,
            pool_size,
            buckets,
        } => {
            let (d, _) = ctx.dataset(dataset)?;
            let size = pool_size.unwrap_or(d.len() / buckets).max(1).min(d.len());
            sample_random_control(&d, size, ctx.seed)?
                .with_id(&job.id)
                .write_manifest(out, "pool")?;
            Ok(JobReport::completed())
        }
        Task::Trial {
            dataset,
            pool,
            trainer,
            hyperparams,
            baseline,
            early_stop,
            baseline_trial,
            checkpoint_from,
        } => {
            let (d, dpath) = ctx.dataset(dataset)?;
            let pool = match pool {
                PoolSource::Job(id) => ctx.pool(id)?,
                PoolSource::Dataset => {
                    let ids: Vec<String> = d.iter().map(|s| s.id.clone()).collect();
                    let n = ids.len();
                    DataPool::new("dataset", ids, Vec::new(), SplitLabel::Random, n, None)?
                }
            };
            let checkpoint_in = checkpoint_from.as_deref().map(|c| checkpoint_of(ctx, c)).transpose()?;
            let baseline_mean = baseline_trial
                .as_deref()
                .map(|b| ctx.read::<TrialRecord>(b, "result.json")?.metric_vector().map(|m| m.mean()))
                .transpose()?;
            let setup = TrialSetup {
                ctx,
                trainer,
                dataset: &d,
                dataset_path: &dpath,
                hyperparams,
                checkpoint_in: checkpoint_in.as_deref(),
            };
            run_trial(&setup, &pool, *baseline, early_stop.as_ref().zip(baseline_mean), out)
        }
        Task::Rank { baseline_trial, ops } => {
            let base = ctx.read::<TrialRecord>(baseline_trial, "result.json")?.metric_vector()?;
            let mut rows = Vec::new();
            let mut book = BoundaryBook::new();
            for input in ops {
                let changes = input
                    .trials
                    .iter()
                    .map(|t| relative_improvement(&ctx.read::<TrialRecord>(t, "result.json")?.metric_vector()?, &base))
                    .collect::<Result<Vec<_>>>()?;
                rows.push(OpRankRow::new(&input.op, changes)?);
                if let Some(p) = input.pools.first() {
                    book.insert(ctx.read::<SplitBoundaries>(p, "boundaries.json")?);
                }
            }
            let ranking = rank_ops(rows)?;
            write_json(out, "ranking.json", &ranking)?;
            write(&out.join("ranking.csv"), &emit_ranking(&ranking))?;
            write_json(out, "boundaries.json", &book)?;
            Ok(JobReport::completed())
        }
        Task::Correlate {
            dataset,
            stats,
            clusters,
        } => {
            let (d, _) = ctx.dataset(dataset)?;
            let stats = match stats {
                Some(s) => s.clone(),
                None => {
                    let first = d
                        .samples()
                        .first()
                        .ok_or_else(|| Error::Invalid("cannot correlate an empty dataset".into()))?;
                    first.stats.keys().cloned().collect()
                }
            };
            let m = stat_correlations(&d, &stats)?;
            write_json(out, "correlation.json", &m)?;
            write(&out.join("correlation.csv"), &emit_correlation(&m))?;
            if let Some(k) = clusters {
                let a = ward_cluster(ClusterInput::Correlation(&m), *k)?;
                write_json(out, "clusters.json", &a)?;
            }
            Ok(JobReport::completed())
        }
        Task::ProposeRecipes {
            ranking,
            clusters,
            strategy,
            max_order,
        } => {
            let rows: Vec<OpRankRow> = ctx.read(ranking, "ranking.json")?;
            let book: BoundaryBook = ctx.read(ranking, "boundaries.json")?;
            let clusters: Option<ClusterAssignment> =
                clusters.as_deref().map(|c| ctx.read(c, "clusters.json")).transpose()?;
            let recipes = crate::analysis::propose_recipes(&rows, clusters.as_ref(), *strategy, *max_order, &book)?;
            write_json(out, "recipes.json", &recipes)?;
            write_json(out, "boundaries.json", &book)?;
            Ok(JobReport::completed())
        }
        Task::RecipeTrials {
            dataset,
            recipes,
            trainer,
            hyperparams,
            pool_size,
        } => recipe_trials(ctx, dataset, recipes, trainer, hyperparams, *pool_size, out),
        Task::Pyramid {
            dataset,
            ranking,
            top,
            max_ops,
        } => {
            let (d, _) = ctx.dataset(dataset)?;
            let rows: Vec<OpRankRow> = ctx.read(ranking, "ranking.json")?;
            let book: BoundaryBook = ctx.read(ranking, "boundaries.json")?;
            if rows.len() < *top {
                return Err(Error::MaxOrder {
                    max_order: *top,
                    available: rows.len(),
                });
            }
            let configs = rows[..*top]
                .iter()
                .map(|r| book.config(&r.op_name, r.best_split))
                .collect::<Result<Vec<_>>>()?;
            let pyramid = build_pyramid(&d, &configs, *max_ops)?;
            let pools_dir = out.join("pools");
            std::fs::create_dir_all(&pools_dir).map_err(|e| Error::io(&pools_dir, e))?;
            let mut paths = Vec::new();
            for (i, pool) in pyramid.pools.iter().enumerate() {
                let stem = format!("{i:02}");
                pool.write_manifest(&pools_dir, &stem)?;
                paths.push(format!("pools/{stem}.json"));
            }
            write_json(
                out,
                "pyramid.json",
                &PyramidRecord {
                    spec: pyramid.spec.clone(),
                    pools: paths,
                },
            )?;
            Ok(JobReport::completed())
        }
        Task::Scale {
            dataset,
            pyramid,
            ks,
            mode,
            trainer,
            hyperparams,
        } => scale(ctx, dataset, pyramid, ks, *mode, trainer, hyperparams, out),
        Task::Diversity { dataset, pools, top_n } => {
            let (d, _) = ctx.dataset(dataset)?;
            let mut reports = Vec::new();
            for job in pools {
                let members = match ctx.plan.job(job).map(PlannedJob::kind) {
                    Some("pyramid") => load_pyramid(&ctx.dir(job))?.pools,
                    _ => vec![ctx.pool(job)?],
                };
                for pool in members {
                    let texts = d.select(pool.sample_ids())?;
                    reports.push(diversity_report(
                        pool.pool_id(),
                        texts.iter().map(|s| s.text.as_str()),
                        *top_n,
                    )?);
                }
            }
            write_json(out, "diversity.json", &reports)?;
            Ok(JobReport::completed())
        }
        Task::Cost {
            params,
            hoeffding,
            entries,
            per_sample_cost,
            unit,
        } => {
            let mut entries = entries.clone();
            if let Some(c) = per_sample_cost {
                for n in &job.needs {
                    if let Some(trained) = trained_samples_of(ctx, n)? {
                        entries.push(CostLedgerEntry::new(n.clone(), trained, *c, *unit));
                    }
                }
            }
            let record = CostRecord {
                report: cost_report(params, hoeffding.as_ref())?,
                totals: ledger_total(&entries),
                entries,
            };
            write_json(out, "cost.json", &record)?;
            Ok(JobReport::completed())
        }
        Task::SweepRank {
            points,
            grid,
            baseline,
        } => {
            let records = points
                .iter()
                .map(|p| ctx.read::<TrialRecord>(p, "result.json"))
                .collect::<Result<Vec<_>>>()?;
            let base = records[*baseline].metric_vector()?;
            let mut rows = Vec::new();
            for (i, (r, hp)) in records.iter().zip(grid).enumerate() {
                let m = r.metric_vector()?;
                rows.push(SweepPoint {
                    index: i,
                    hyperparams: hp.clone().into_iter().collect(),
                    baseline: i == *baseline,
                    mean: m.mean(),
                    change: relative_improvement(&m, &base)?,
                });
            }
            write_json(out, "sweep.json", &rows)?;
            write(&out.join("sweep.csv"), &emit_sweep(&rows))?;
            Ok(JobReport::completed())
        }
        Task::Iteration {
            dataset,
            index,
            recipes,
            trainer,
            hyperparams,
            pool_size,
            previous,
        } => iteration(ctx, dataset, *index, recipes, trainer, hyperparams, *pool_size, previous.as_deref(), out),
        Task::Chain { iterations } => {
            let records = iterations
                .iter()
                .map(|i| ctx.read::<IterationRecord>(i, "iteration.json"))
                .collect::<Result<Vec<_>>>()?;
            let trajectory = records.iter().map(|r| r.mean).collect();
            write_json(
                out,
                "chain.json",
                &ChainRecord {
                    iterations: records,
                    trajectory,
                },
            )?;
            Ok(JobReport::completed())
        }
    }
}

fn trained_samples_of(ctx: &JobContext<'_>, job: &str) -> Result<Option<u64>> {
    let dir = ctx.dir(job);
    if dir.join("result.json").exists() {
        return Ok(Some(read_json::<TrialRecord>(&dir.join("result.json"))?.trained_samples));
    }
    if dir.join("iteration.json").exists() {
        return Ok(Some(read_json::<IterationRecord>(&dir.join("iteration.json"))?.trained_samples));
    }
    Ok(None)
}

fn checkpoint_of(ctx: &JobContext<'_>, job: &str) -> Result<PathBuf> {
    let dir = ctx.dir(job);
    let rel = if dir.join("iteration.json").exists() {
        read_json::<IterationRecord>(&dir.join("iteration.json"))?.checkpoint
    } else {
        read_json::<TrialRecord>(&dir.join("result.json"))?.checkpoint
    };
    let rel = rel.ok_or_else(|| Error::Chain(format!("job {job:?} left no checkpoint")))?;
    let path = dir.join(rel);
    if !path.exists() {
        return Err(Error::Chain(format!("checkpoint {} of job {job:?} is missing", path.display())));
    }
    Ok(path)
}

pub fn load_pyramid(dir: &Path) -> Result<Pyramid> {
    let record: PyramidRecord = read_json(&dir.join("pyramid.json"))?;
    let pools = record
        .pools
        .iter()
        .map(|p| DataPool::read_manifest(&dir.join(p)))
        .collect::<Result<_>>()?;
    Ok(Pyramid {
        spec: record.spec,
        pools,
    })
}

struct TrialSetup<'a> {
    ctx: &'a JobContext<'a>,
    trainer: &'a str,
    dataset: &'a Dataset,
    dataset_path: &'a Path,
    hyperparams: &'a Hyperparams,
    checkpoint_in: Option<&'a Path>,
}

impl TrialSetup<'_> {
    /// Trains in `scratch/<sub>` and keeps any checkpoint file as
    /// `<keep>/<name>` under `out`.
    fn train(&self, pool: &DataPool, hyperparams: &Hyperparams, out: &Path, sub: &str) -> Result<(TrainOutcome, Option<String>)> {
        let entry = self.ctx.plan.trainer(self.trainer)?;
        let workdir = out.join(SCRATCH_DIR).join(sub);
        std::fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
        let req = TrainRequest {
            pool,
            dataset: self.dataset,
            dataset_path: Some(self.dataset_path),
            hyperparams,
            seed: derive_seed(self.ctx.seed, sub),
            checkpoint_in: self.checkpoint_in,
            workdir: &workdir,
        };
        let outcome = entry.trainer.train_eval(&req)?;
        let kept = match &outcome.checkpoint_out {
            Some(p) if p.is_file() => {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("checkpoint");
                let rel = if sub.is_empty() {
                    format!("checkpoint/{name}")
                } else {
                    format!("checkpoint/{sub}/{name}")
                };
                let dest = out.join(&rel);
                std::fs::create_dir_all(dest.parent().expect("has parent")).map_err(|e| Error::io(&dest, e))?;
                std::fs::copy(p, &dest).map_err(|e| Error::io(p, e))?;
                Some(rel)
            }
            Some(p) => {
                log::warn!("checkpoint {} is not a file and is not kept", p.display());
                None
            }
            None => None,
        };
        Ok((outcome, kept))
    }

    fn partial(&self, pool: &DataPool, fraction: f64, out: &Path) -> Result<Option<MetricVector>> {
        let entry = self.ctx.plan.trainer(self.trainer)?;
        let workdir = out.join(SCRATCH_DIR).join("partial");
        std::fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
        let req = TrainRequest {
            pool,
            dataset: self.dataset,
            dataset_path: Some(self.dataset_path),
            hyperparams: self.hyperparams,
            seed: derive_seed(self.ctx.seed, ""),
            checkpoint_in: self.checkpoint_in,
            workdir: &workdir,
        };
        entry.trainer.partial_eval(&req, fraction)
    }
}

fn run_trial(
    setup: &TrialSetup<'_>,
    pool: &DataPool,
    baseline: bool,
    early_stop: Option<(&EarlyStopPolicy, f64)>,
    out: &Path,
) -> Result<JobReport> {
    let started = std::time::Instant::now();
    let mut early = None;
    if let Some((policy, baseline_mean)) = early_stop {
        if let Some(partial) = setup.partial(pool, policy.fraction, out)? {
            let decision = early_stop_check(partial.mean(), baseline_mean, policy);
            let record = EarlyStopRecord {
                fraction: policy.fraction,
                delta: policy.delta,
                partial_mean: partial.mean(),
                baseline_mean,
                aborted: decision == EarlyStopDecision::Abort,
            };
            if decision == EarlyStopDecision::Abort {
                let result = TrialRecord {
                    pool_id: pool.pool_id().to_owned(),
                    pool_size: pool.len(),
                    baseline,
                    metrics: partial.metrics().clone(),
                    trained_samples: partial.trained_samples(),
                    checkpoint: None,
                    early_stop: Some(record.clone()),
                };
                write_json(out, "result.json", &result)?;
                write_json(out, TIMING_FILE, &Timing {
                    wall_time_s: started.elapsed().as_secs_f64(),
                })?;
                return Ok(JobReport {
                    status: JobStatus::EarlyStopped,
                    note: Some(format!(
                        "stopped at {:.0}%: partial mean {} below baseline {} - {}",
                        policy.fraction * 100.0,
                        record.partial_mean,
                        baseline_mean,
                        policy.delta
                    )),
                });
            }
            early = Some(record);
        }
    }
    let (outcome, checkpoint) = setup.train(pool, setup.hyperparams, out, "")?;
    let result = TrialRecord {
        pool_id: pool.pool_id().to_owned(),
        pool_size: pool.len(),
        baseline,
        metrics: outcome.metrics.metrics().clone(),
        trained_samples: outcome.metrics.trained_samples(),
        checkpoint,
        early_stop: early,
    };
    write_json(out, "result.json", &result)?;
    let wall = if outcome.metrics.wall_time() > 0.0 {
        outcome.metrics.wall_time()
    } else {
        started.elapsed().as_secs_f64()
    };
    write_json(out, TIMING_FILE, &Timing { wall_time_s: wall })?;
    Ok(JobReport::completed())
}

/// Uniform subset of `size` ids, kept in pool order.
fn downsample(pool: &DataPool, size: usize, seed: u64, id: String) -> Result<DataPool> {
    let ids: Vec<String> = if pool.len() > size {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = index::sample(&mut rng, pool.len(), size).into_vec();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| pool.sample_ids()[i].clone()).collect()
    } else {
        pool.sample_ids().to_vec()
    };
    let n = ids.len();
    DataPool::new(id, ids, pool.provenance().to_vec(), pool.split_label(), n, pool.pyramid_level())
}

fn recipe_trials(
    ctx: &JobContext<'_>,
    dataset: &DatasetSource,
    recipes_job: &str,
    trainer: &str,
    hyperparams: &Hyperparams,
    pool_size: Option<usize>,
    out: &Path,
) -> Result<JobReport> {
    let (d, dpath) = ctx.dataset(dataset)?;
    let recipes: Vec<Recipe> = ctx.read(recipes_job, "recipes.json")?;
    let book: BoundaryBook = ctx.read(recipes_job, "boundaries.json")?;
    let composed = recipes
        .iter()
        .map(|r| compose_recipe(&d, r, &book))
        .collect::<Result<Vec<_>>>()?;
    let smallest = composed.iter().map(DataPool::len).filter(|&n| n > 0).min();
    let size = pool_size.or(smallest).ok_or_else(|| Error::Invalid("every recipe pool is empty".into()))?;
    let setup = TrialSetup {
        ctx,
        trainer,
        dataset: &d,
        dataset_path: &dpath,
        hyperparams,
        checkpoint_in: None,
    };
    let control = sample_random_control(&d, size.min(d.len()), derive_seed(ctx.seed, "control"))?;
    let (base, _) = setup.train(&control, hyperparams, out, "control")?;
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (i, (recipe, pool)) in recipes.iter().zip(&composed).enumerate() {
        if pool.is_empty() {
            skipped.push(recipe.label());
            continue;
        }
        let label = recipe.label();
        let pool = downsample(pool, size, derive_seed(ctx.seed, &label), format!("recipe:{label}"))?;
        let (outcome, _) = setup.train(&pool, hyperparams, out, &format!("r{i:02}"))?;
        results.push(RecipeResult {
            recipe: label,
            order: recipe.len(),
            pool_size: pool.len(),
            mean: outcome.metrics.mean(),
            change: relative_improvement(&outcome.metrics, &base.metrics)?,
        });
    }
    write_json(out, "recipe_results.json", &results)?;
    write(&out.join("recipe_ranking.csv"), &emit_recipe_ranking(&results))?;
    let note = (!skipped.is_empty()).then(|| format!("empty recipe pools skipped: {}", skipped.join(", ")));
    Ok(JobReport {
        status: JobStatus::Completed,
        note,
    })
}

#[allow(clippy::too_many_arguments)]
fn scale(
    ctx: &JobContext<'_>,
    dataset: &DatasetSource,
    pyramid_job: &str,
    ks: &[usize],
    mode: ScheduleMode,
    trainer: &str,
    hyperparams: &Hyperparams,
    out: &Path,
) -> Result<JobReport> {
    let (d, dpath) = ctx.dataset(dataset)?;
    let pyramid = load_pyramid(&ctx.dir(pyramid_job))?;
    let top = pyramid.top_pool().ok_or(Error::EmptyPyramid)?;
    let base_epochs = match hyperparams.get("epochs") {
        None => 1,
        Some(v) => v
            .as_u64()
            .filter(|e| *e >= 1)
            .ok_or_else(|| Error::Invalid(format!("epochs must be a positive integer, got {v}")))?,
    };
    let setup = TrialSetup {
        ctx,
        trainer,
        dataset: &d,
        dataset_path: &dpath,
        hyperparams,
        checkpoint_in: None,
    };
    let mut points = Vec::new();
    let mut schedules = Vec::new();
    let mut warnings = Vec::new();
    for &k in ks {
        let schedule = schedule_compute(&pyramid, &d, k, mode, derive_seed(ctx.seed, &format!("k{k}")))?;
        warnings.extend(schedule.warnings.iter().cloned());
        let (pool, epochs, control_size, control_epochs) = match mode {
            ScheduleMode::Repetitive => (top.clone(), k as u64, top.len(), k as u64),
            ScheduleMode::NonRepetitive => {
                let ids = schedule.materialize(&pyramid, &d)?;
                let n = ids.len();
                let pool = DataPool::new(format!("scale:k{k}"), ids, Vec::new(), SplitLabel::Merged, n, None)?;
                (pool, 1, n.min(d.len()), 1)
            }
        };
        let mut hp = hyperparams.clone();
        hp.insert("epochs".into(), Value::from(epochs * base_epochs));
        let (outcome, _) = setup.train(&pool, &hp, out, &format!("k{k}"))?;
        let control = sample_random_control(&d, control_size, derive_seed(ctx.seed, &format!("control{k}")))?;
        let mut chp = hyperparams.clone();
        chp.insert("epochs".into(), Value::from(control_epochs * base_epochs));
        let (base, _) = setup.train(&control, &chp, out, &format!("k{k}-control"))?;
        points.push(ScalingPoint {
            k,
            mode,
            trained_samples: outcome.metrics.trained_samples(),
            target: schedule.target,
            truncated: schedule.is_truncated(),
            mean: outcome.metrics.mean(),
            baseline_mean: base.metrics.mean(),
            change: relative_improvement(&outcome.metrics, &base.metrics)?,
        });
        schedules.push(schedule);
    }
    write_json(out, "scaling.json", &points)?;
    write(&out.join("scaling.csv"), &emit_scaling_curve(&points))?;
    write_json(out, "schedules.json", &schedules)?;
    Ok(JobReport {
        status: JobStatus::Completed,
        note: (!warnings.is_empty()).then(|| warnings.join("; ")),
    })
}

#[allow(clippy::too_many_arguments)]
fn iteration(
    ctx: &JobContext<'_>,
    dataset: &DatasetSource,
    index_: usize,
    recipes_job: &str,
    trainer: &str,
    hyperparams: &Hyperparams,
    pool_size: Option<usize>,
    previous: Option<&str>,
    out: &Path,
) -> Result<JobReport> {
    let (d, dpath) = ctx.dataset(dataset)?;
    let recipes: Vec<Recipe> = ctx.read(recipes_job, "recipes.json")?;
    let book: BoundaryBook = ctx.read(recipes_job, "boundaries.json")?;
    // proposals list the widest combination last
    let recipe = recipes
        .last()
        .ok_or_else(|| Error::Invalid(format!("job {recipes_job:?} proposed no recipes")))?;
    let composed = compose_recipe(&d, recipe, &book)?;
    if composed.is_empty() {
        return Err(Error::Invalid(format!("recipe {} selects no samples", recipe.label())));
    }
    let size = pool_size.unwrap_or(composed.len());
    let pool = downsample(&composed, size, ctx.seed, format!("recipe:{}", recipe.label()))?;
    let checkpoint_in = previous.map(|p| checkpoint_of(ctx, p)).transpose()?;
    let setup = TrialSetup {
        ctx,
        trainer,
        dataset: &d,
        dataset_path: &dpath,
        hyperparams,
        checkpoint_in: checkpoint_in.as_deref(),
    };
    let (outcome, checkpoint) = setup.train(&pool, hyperparams, out, "")?;
    let record = IterationRecord {
        index: index_,
        recipe: recipe.label(),
        pool_size: pool.len(),
        metrics: outcome.metrics.metrics().clone(),
        mean: outcome.metrics.mean(),
        trained_samples: outcome.metrics.trained_samples(),
        checkpoint,
        parent: previous.map(str::to_owned),
    };
    write_json(out, "iteration.json", &record)?;
    Ok(JobReport::completed())
}
