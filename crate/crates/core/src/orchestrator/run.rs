//! Phase-ordered execution with a bounded worker pool, atomic job
//! directories and ledger-driven resume.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::digest::{derive_seed, file_digest, ContentHasher};
use crate::error::{Error, Result};
use crate::model::{JobStatus, LedgerEntry, RunLedger};
use crate::orchestrator::config::Phase;
use crate::orchestrator::jobs::{execute, DatasetCache, JobContext, JobReport, SCRATCH_DIR, TIMING_FILE};
use crate::orchestrator::plan::{DatasetSource, PlannedJob, Task, WorkflowPlan};
use crate::reports::{json_bytes, write_bundle, ReportIndex};

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const JOBS_DIR: &str = "jobs";
pub const REPORTS_DIR: &str = "reports";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Skip jobs whose ledger entry and directory still match their inputs.
    pub resume: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub workdir: PathBuf,
    pub ledger: RunLedger,
    /// Final status per job id.
    pub statuses: BTreeMap<String, JobStatus>,
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    /// Failed job ids with their error message.
    pub failed: Vec<(String, String)>,
    pub blocked: Vec<String>,
    pub reports: ReportIndex,
}

impl RunOutcome {
    pub fn is_success(&self) -> bool {
        self.failed.is_empty() && self.blocked.is_empty()
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Digest of a job directory: relative paths and file contents, sorted,
/// excluding the timing file and the scratch area.
pub fn dir_digest(dir: &Path) -> Result<String> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            let rel = path
                .strip_prefix(root)
                .expect("walk stays under root")
                .to_string_lossy()
                .replace('\\', "/");
            if rel == TIMING_FILE || rel == SCRATCH_DIR {
                continue;
            }
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push((rel, path));
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files)?;
    files.sort();
    let mut h = ContentHasher::new();
    for (rel, path) in files {
        h.field(rel).field(file_digest(&path)?);
    }
    Ok(h.finish())
}

/// Everything a job's result depends on: its task, seed, the outputs of
/// its dependencies, the files it reads and the trainer it uses. File
/// digests are memoized in `files` for the length of a run.
pub fn input_digest(
    plan: &WorkflowPlan,
    job: &PlannedJob,
    outputs: &HashMap<String, String>,
    files: &mut HashMap<PathBuf, String>,
) -> Result<String> {
    let mut digest_of = |p: &Path| -> Result<String> {
        if let Some(d) = files.get(p) {
            return Ok(d.clone());
        }
        let d = file_digest(p)?;
        files.insert(p.to_owned(), d.clone());
        Ok(d)
    };
    let mut h = ContentHasher::new();
    h.field(env!("CARGO_PKG_VERSION"))
        .field(job.kind())
        .json(&job.task)
        .field(job_seed(plan, job).to_le_bytes());
    for n in &job.needs {
        let out = outputs
            .get(n)
            .ok_or_else(|| Error::Invalid(format!("job {:?} ran before its dependency {n:?}", job.id)))?;
        h.field(n).field(out);
    }
    if let Some(DatasetSource::File(p)) = job.task.dataset() {
        h.field(digest_of(p)?);
    }
    if let Task::ComputeStats { stats, .. } = &job.task {
        for asset in stats.iter().filter_map(|s| s.asset()) {
            h.field(digest_of(asset)?);
        }
    }
    if let Some(t) = job.task.trainer() {
        h.json(&plan.trainer(t)?.decl);
    }
    Ok(h.finish())
}

pub fn job_seed(plan: &WorkflowPlan, job: &PlannedJob) -> u64 {
    derive_seed(plan.seed, &job.id)
}

fn remove_dir(path: &Path) -> Result<()> {
    if path.exists() {
        std::fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Runs `job` in `jobs/.tmp-<id>` and renames the directory into place only
/// on success. Returns the output digest.
fn execute_atomic(ctx: &JobContext<'_>, job: &PlannedJob) -> Result<(JobReport, String)> {
    let tmp = ctx.jobs_dir.join(format!(".tmp-{}", job.id));
    let dest = ctx.jobs_dir.join(&job.id);
    remove_dir(&tmp)?;
    remove_dir(&dest)?;
    let scratch = tmp.join(SCRATCH_DIR);
    std::fs::create_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
    let report = match execute(ctx, job, &tmp) {
        Ok(r) => r,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&tmp);
            return Err(e);
        }
    };
    remove_dir(&scratch)?;
    std::fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
    let digest = dir_digest(&dest)?;
    Ok((report, digest))
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

struct Finished {
    index: usize,
    input: String,
    started_ms: u64,
    result: Result<(JobReport, String)>,
}

/// Executes every job of `plan` under its workdir.
///
/// Phases run in order; within a phase at most `max_parallel` jobs run at
/// once and a job starts only after all of its `needs` finished. A failed
/// job blocks its dependents; unrelated jobs still run. Without
/// `options.resume` the ledger, job directories and reports are cleared
/// first.
pub fn run_workflow(plan: &WorkflowPlan, options: RunOptions) -> Result<RunOutcome> {
    let workdir = plan
        .workdir
        .clone()
        .ok_or_else(|| Error::Config("no workdir: set it in the config, on the command line or in SANDBOX_WORKDIR".into()))?;
    let jobs_dir = workdir.join(JOBS_DIR);
    let ledger_path = workdir.join(LEDGER_FILE);
    std::fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
    let mut ledger = if options.resume {
        RunLedger::open(&ledger_path)?
    } else {
        remove_dir(&jobs_dir)?;
        remove_dir(&workdir.join(REPORTS_DIR))?;
        RunLedger::create(&ledger_path)?
    };
    std::fs::create_dir_all(&jobs_dir).map_err(|e| Error::io(&jobs_dir, e))?;
    for entry in std::fs::read_dir(&jobs_dir).map_err(|e| Error::io(&jobs_dir, e))? {
        let entry = entry.map_err(|e| Error::io(&jobs_dir, e))?;
        if entry.file_name().to_string_lossy().starts_with(".tmp-") {
            remove_dir(&entry.path())?;
        }
    }

    let datasets = DatasetCache::default();
    let max_parallel = plan.max_parallel.max(1);
    let mut outputs: HashMap<String, String> = HashMap::new();
    let mut file_digests: HashMap<PathBuf, String> = HashMap::new();
    let mut statuses: BTreeMap<String, JobStatus> = BTreeMap::new();
    let mut executed = Vec::new();
    let mut skipped = Vec::new();
    let mut failed = Vec::new();
    let mut blocked = Vec::new();

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel::<Finished>();
        for phase in Phase::ALL {
            let mut pending: VecDeque<usize> = (0..plan.jobs.len()).filter(|&i| plan.jobs[i].phase == phase).collect();
            let mut in_flight = 0usize;
            loop {
                // dispatch every ready job that fits
                let mut i = 0;
                while i < pending.len() && in_flight < max_parallel {
                    let job = &plan.jobs[pending[i]];
                    if !job.needs.iter().all(|n| statuses.contains_key(n)) {
                        i += 1;
                        continue;
                    }
                    let index = pending.remove(i).expect("index in range");
                    let now = now_ms();
                    if let Some(bad) = job.needs.iter().find(|n| !statuses[*n].is_done()) {
                        let entry = LedgerEntry {
                            job_id: job.id.clone(),
                            job_kind: job.kind().into(),
                            input_digest: String::new(),
                            output_digest: None,
                            status: JobStatus::Blocked,
                            seed: job_seed(plan, job),
                            started_ms: now,
                            finished_ms: now,
                            note: Some(format!("dependency {bad:?} did not finish")),
                        };
                        ledger.record(entry.clone())?;
                        log::warn!("{} blocked by {bad}", job.id);
                        for (_, hook) in &plan.hooks {
                            if let Err(e) = hook.post_job(job, &entry, &ledger) {
                                log::warn!("post-job hook on {}: {e}", job.id);
                            }
                        }
                        statuses.insert(job.id.clone(), JobStatus::Blocked);
                        blocked.push(job.id.clone());
                        continue;
                    }
                    let input = match input_digest(plan, job, &outputs, &mut file_digests) {
                        Ok(d) => d,
                        Err(e) => {
                            tx.send(Finished {
                                index,
                                input: String::new(),
                                started_ms: now,
                                result: Err(e),
                            })
                            .expect("receiver alive");
                            in_flight += 1;
                            continue;
                        }
                    };
                    if options.resume {
                        if let Some(prev) = ledger.finished(&job.id, &input) {
                            let dir = jobs_dir.join(&job.id);
                            let current = if dir.is_dir() { dir_digest(&dir).ok() } else { None };
                            if let Some(current) = current.filter(|c| Some(c) == prev.output_digest.as_ref()) {
                                log::info!("{} unchanged, skipping", job.id);
                                outputs.insert(job.id.clone(), current);
                                statuses.insert(job.id.clone(), prev.status);
                                skipped.push(job.id.clone());
                                continue;
                            }
                        }
                    }
                    let hook_err = plan.hooks.iter().find_map(|(name, hook)| {
                        hook.pre_job(job, &ledger)
                            .err()
                            .map(|e| Error::Invalid(format!("pre-job hook {name:?}: {e}")))
                    });
                    if let Some(e) = hook_err {
                        tx.send(Finished {
                            index,
                            input,
                            started_ms: now,
                            result: Err(e),
                        })
                        .expect("receiver alive");
                        in_flight += 1;
                        continue;
                    }
                    let tx = tx.clone();
                    let jobs_dir = &jobs_dir;
                    let datasets = &datasets;
                    scope.spawn(move || {
                        let ctx = JobContext {
                            plan,
                            jobs_dir,
                            datasets,
                            seed: job_seed(plan, job),
                        };
                        let result = catch_unwind(AssertUnwindSafe(|| execute_atomic(&ctx, job)))
                            .unwrap_or_else(|p| Err(Error::Invalid(format!("job panicked: {}", panic_message(&*p)))));
                        let _ = tx.send(Finished {
                            index,
                            input,
                            started_ms: now,
                            result,
                        });
                    });
                    in_flight += 1;
                }

                if in_flight == 0 {
                    if pending.is_empty() {
                        break;
                    }
                    return Err(Error::Invalid(format!(
                        "phase {phase}: jobs {:?} can never start",
                        pending.iter().map(|&i| &plan.jobs[i].id).collect::<Vec<_>>()
                    )));
                }
                let done = rx.recv().expect("a worker is in flight");
                in_flight -= 1;
                let job = &plan.jobs[done.index];
                let mut entry = LedgerEntry {
                    job_id: job.id.clone(),
                    job_kind: job.kind().into(),
                    input_digest: done.input,
                    output_digest: None,
                    status: JobStatus::Failed,
                    seed: job_seed(plan, job),
                    started_ms: done.started_ms,
                    finished_ms: now_ms(),
                    note: None,
                };
                match done.result {
                    Ok((report, digest)) => {
                        entry.status = report.status;
                        entry.output_digest = Some(digest);
                        entry.note = report.note;
                    }
                    Err(e) => entry.note = Some(e.to_string()),
                }
                if let Err(e) = ledger.record(entry.clone()) {
                    entry.status = JobStatus::Failed;
                    entry.output_digest = None;
                    entry.note = Some(e.to_string());
                    ledger.record(entry.clone())?;
                }
                if entry.status.is_done() {
                    outputs.insert(job.id.clone(), entry.output_digest.clone().expect("done jobs have outputs"));
                    executed.push(job.id.clone());
                } else {
                    let msg = entry.note.clone().unwrap_or_default();
                    log::error!("{} failed: {msg}", job.id);
                    failed.push((job.id.clone(), msg));
                }
                statuses.insert(job.id.clone(), entry.status);
                for (_, hook) in &plan.hooks {
                    if let Err(e) = hook.post_job(job, &entry, &ledger) {
                        log::warn!("post-job hook on {}: {e}", job.id);
                    }
                }
            }
        }
        Ok(())
    })?;

    let reports = write_reports(plan, &workdir, &statuses)?;
    Ok(RunOutcome {
        workdir,
        ledger,
        statuses,
        executed,
        skipped,
        failed,
        blocked,
        reports,
    })
}

/// Report files each job kind contributes to the bundle.
fn report_files(kind: &str) -> &'static [&'static str] {
    match kind {
        "rank" => &["ranking.csv", "ranking.json"],
        "correlate" => &["correlation.csv", "clusters.json"],
        "propose_recipes" => &["recipes.json"],
        "recipe_trials" => &["recipe_ranking.csv"],
        "scale" => &["scaling.csv"],
        "diversity" => &["diversity.json"],
        "cost" => &["cost.json"],
        "sweep_rank" => &["sweep.csv"],
        "chain" => &["chain.json"],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub job: String,
    pub kind: String,
    pub phase: Phase,
    pub status: Option<JobStatus>,
}

/// Rebuilds `reports/` from finished job directories: per-job tables under
/// `<job id>/` plus `summary.json`, and `index.json` over all of them.
pub fn write_reports(plan: &WorkflowPlan, workdir: &Path, statuses: &BTreeMap<String, JobStatus>) -> Result<ReportIndex> {
    let jobs_dir = workdir.join(JOBS_DIR);
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for job in &plan.jobs {
        let status = statuses.get(&job.id).copied();
        summary.push(SummaryRow {
            job: job.id.clone(),
            kind: job.kind().into(),
            phase: job.phase,
            status,
        });
        if !status.is_some_and(JobStatus::is_done) {
            continue;
        }
        for name in report_files(job.kind()) {
            let path = jobs_dir.join(&job.id).join(name);
            if path.is_file() {
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                files.push((format!("{}/{name}", job.id), bytes));
            }
        }
    }
    files.push(("summary.json".into(), json_bytes(&summary)));
    write_bundle(&workdir.join(REPORTS_DIR), files)
}

/// Statuses of the plan's jobs according to the ledger in `workdir`.
pub fn ledger_statuses(plan: &WorkflowPlan, workdir: &Path) -> Result<BTreeMap<String, JobStatus>> {
    let ledger = RunLedger::open(&workdir.join(LEDGER_FILE))?;
    Ok(plan
        .jobs
        .iter()
        .filter_map(|j| ledger.latest(&j.id).map(|e| (j.id.clone(), e.status)))
        .collect())
}
