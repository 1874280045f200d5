use std::collections::BTreeMap;
use std::path::Path;

use sandbox_core::model::{Dataset, JobStatus, Sample};
use sandbox_core::orchestrator::{
    dir_digest, plan_from_yaml, run_workflow, Registry, RunOptions, WorkflowPlan, JOBS_DIR, REPORTS_DIR,
};

fn write_dataset(path: &Path, n: usize) {
    let d: Dataset = (0..n)
        .map(|i| {
            let x = i as f64;
            Sample::new(format!("s{i:04}"), format!("word{} word{} shared", i % 17, i % 5))
                .with_stat("a", (x * 7.0) % 13.0)
                .with_stat("b", (x * 3.0) % 11.0)
                .with_stat("c", (x * 5.0) % 7.0)
        })
        .collect();
    d.write_jsonl(path).unwrap();
}

const WORKFLOW: &str = r#"
seed: 7
registries:
  hooks: [log_progress]
  trainers:
    synth:
      factory: synthetic
      params:
        base: {acc: 50.0, f1: 40.0}
        weights: {a: 1.0, b: -0.5}
        sigma: 0.01
phases:
  probe:
    - id: probe
      kind: probe
      params: {dataset: data.jsonl, ops: [a, b, c], trainer: synth, pool_size: 40}
    - id: corr
      kind: correlate
      params: {dataset: data.jsonl, stats: [a, b, c], clusters: 2}
  refine:
    - id: recipes
      kind: propose_recipes
      needs: [probe]
      params: {ranking: probe, max_order: 2}
    - id: pyr
      kind: pyramid
      params: {dataset: data.jsonl, ranking: probe, top: 2}
  execute:
    - id: tried
      kind: recipe_trials
      params: {dataset: data.jsonl, recipes: recipes, trainer: synth, pool_size: 30}
    - id: scale
      kind: scale
      params: {dataset: data.jsonl, pyramid: pyr, ks: [1, 2], trainer: synth}
    - id: sweep
      kind: sweep
      params: {dataset: data.jsonl, trainer: synth, grid: [{lr: 1}, {lr: 2}]}
    - id: loop
      kind: iterate
      params: {dataset: data.jsonl, recipes: recipes, trainer: synth, iterations: 3, pool_size: 20}
  evaluate:
    - id: div
      kind: diversity
      needs: [pyr]
      params: {dataset: data.jsonl}
    - id: cost
      kind: cost
      needs: [tried]
      params: {iterations: 3, experiments: 4, ratio: 0.1, hoeffding: {epsilon: 0.05, a: 0, b: 1}}
"#;

fn plan(dir: &Path, parallel: usize, text: &str) -> WorkflowPlan {
    let mut p = plan_from_yaml(text, dir, &Registry::default()).unwrap();
    p.max_parallel = parallel;
    p.with_workdir(dir.join(format!("run{parallel}")))
}

fn digests(plan: &WorkflowPlan) -> BTreeMap<String, String> {
    let jobs = plan.workdir.as_ref().unwrap().join(JOBS_DIR);
    plan.jobs
        .iter()
        .filter(|j| jobs.join(&j.id).is_dir())
        .map(|j| (j.id.clone(), dir_digest(&jobs.join(&j.id)).unwrap()))
        .collect()
}

#[test]
fn full_workflow_is_deterministic_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dir.path().join("data.jsonl"), 300);
    let serial = plan(dir.path(), 1, WORKFLOW);
    let parallel = plan(dir.path(), 8, WORKFLOW);
    let a = run_workflow(&serial, RunOptions::default()).unwrap();
    let b = run_workflow(&parallel, RunOptions::default()).unwrap();
    assert!(a.is_success(), "{:?}", a.failed);
    assert!(b.is_success(), "{:?}", b.failed);
    assert_eq!(a.executed.len(), serial.jobs.len());
    assert_eq!(digests(&serial), digests(&parallel));
    assert_eq!(a.reports, b.reports);
    let index_a = std::fs::read(a.workdir.join(REPORTS_DIR).join("index.json")).unwrap();
    let index_b = std::fs::read(b.workdir.join(REPORTS_DIR).join("index.json")).unwrap();
    assert_eq!(index_a, index_b);

    let reports = a.workdir.join(REPORTS_DIR);
    let ranking = std::fs::read_to_string(reports.join("probe/ranking.csv")).unwrap();
    assert!(ranking.starts_with("op,low,mid,high,best_split,best_value\n"));
    // weight +1 on a, -0.5 on b: a's high split and b's low split win
    let lines: Vec<&str> = ranking.lines().collect();
    assert!(lines[1].starts_with("a,") && lines[1].contains(",high,"), "{ranking}");
    assert!(lines.iter().any(|l| l.starts_with("b,") && l.contains(",low,")), "{ranking}");
    assert!(reports.join("scale/scaling.csv").is_file());
    assert!(reports.join("loop/chain.json").is_file());
    assert!(reports.join("summary.json").is_file());
}

#[test]
fn resume_skips_finished_jobs_and_reruns_tampered_ones() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dir.path().join("data.jsonl"), 200);
    let p = plan(dir.path(), 4, WORKFLOW);
    let first = run_workflow(&p, RunOptions::default()).unwrap();
    assert!(first.is_success());
    let before = digests(&p);

    let again = run_workflow(&p, RunOptions { resume: true }).unwrap();
    assert!(again.executed.is_empty(), "{:?}", again.executed);
    assert_eq!(again.skipped.len(), p.jobs.len());

    // tampering with one job's output reruns it; identical output keeps dependents
    let jobs = p.workdir.as_ref().unwrap().join(JOBS_DIR);
    std::fs::write(jobs.join("probe").join("ranking.csv"), "junk").unwrap();
    let third = run_workflow(&p, RunOptions { resume: true }).unwrap();
    assert_eq!(third.executed, ["probe"]);
    assert_eq!(digests(&p), before);

    // an interrupted job directory is cleaned up
    std::fs::create_dir_all(jobs.join(".tmp-cost")).unwrap();
    std::fs::remove_dir_all(jobs.join("cost")).unwrap();
    let fourth = run_workflow(&p, RunOptions { resume: true }).unwrap();
    assert_eq!(fourth.executed, ["cost"]);
    assert!(!jobs.join(".tmp-cost").exists());
    assert_eq!(digests(&p), before);
}

#[test]
fn changed_inputs_invalidate_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_dataset(&data, 200);
    let p = plan(dir.path(), 2, WORKFLOW);
    run_workflow(&p, RunOptions::default()).unwrap();
    write_dataset(&data, 210);
    let again = run_workflow(&p, RunOptions { resume: true }).unwrap();
    assert!(again.is_success());
    // everything reads the dataset except the cost job's own parameters,
    // and cost depends on recipe trials
    assert_eq!(again.executed.len(), p.jobs.len());
}

#[test]
fn failures_block_dependents_only() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dir.path().join("data.jsonl"), 120);
    let text = r#"
registries:
  trainers:
    broken: {factory: external, params: {command: [sh, -c, "echo boom >&2; exit 3"]}}
    synth: {factory: synthetic, params: {base: {acc: 1.0}, weights: {a: 1.0}}}
phases:
  probe:
    - {id: bad, kind: probe, params: {dataset: data.jsonl, ops: [a], trainer: broken}}
    - {id: good, kind: probe, params: {dataset: data.jsonl, ops: [b], trainer: synth}}
  refine:
    - {id: after_bad, kind: propose_recipes, params: {ranking: bad, max_order: 1}}
    - {id: after_good, kind: propose_recipes, params: {ranking: good, max_order: 1}}
"#;
    let p = plan(dir.path(), 3, text);
    let out = run_workflow(&p, RunOptions::default()).unwrap();
    assert!(!out.is_success());
    assert_eq!(out.statuses["good"], JobStatus::Completed);
    assert_eq!(out.statuses["after_good"], JobStatus::Completed);
    assert_eq!(out.statuses["bad.trial.random"], JobStatus::Failed);
    assert_eq!(out.statuses["bad"], JobStatus::Blocked);
    assert_eq!(out.statuses["after_bad"], JobStatus::Blocked);
    let (_, msg) = out.failed.iter().find(|(id, _)| id == "bad.trial.random").unwrap();
    assert!(msg.contains("boom"), "{msg}");
    // pools of the failed probe still ran
    assert_eq!(out.statuses["bad.pool.a.low"], JobStatus::Completed);
}

#[test]
fn early_stop_marks_weak_trials() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dir.path().join("data.jsonl"), 300);
    let text = r#"
registries:
  trainers:
    synth: {factory: synthetic, params: {base: {acc: 10.0}, weights: {a: 1.0}}}
phases:
  probe:
    - id: probe
      kind: probe
      params:
        dataset: data.jsonl
        ops: [a]
        trainer: synth
        early_stop: {fraction: 0.5, delta: 0.5}
"#;
    let p = plan(dir.path(), 2, text);
    let out = run_workflow(&p, RunOptions::default()).unwrap();
    assert!(out.is_success(), "{:?}", out.failed);
    assert_eq!(out.statuses["probe.trial.a.low"], JobStatus::EarlyStopped);
    assert_eq!(out.statuses["probe.trial.a.high"], JobStatus::Completed);
    assert_eq!(out.statuses["probe"], JobStatus::Completed);
}

#[test]
fn missing_workdir_is_a_config_error() {
    let p = plan_from_yaml("{}", Path::new("."), &Registry::default()).unwrap();
    assert!(matches!(
        run_workflow(&p, RunOptions::default()),
        Err(sandbox_core::Error::Config(_))
    ));
}
