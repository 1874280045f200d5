use std::path::Path;
use std::process::{Command, Output};

fn sandbox(args: &[&str], env_workdir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sandbox"));
    cmd.args(args).env_remove("SANDBOX_WORKDIR");
    if let Some(w) = env_workdir {
        cmd.env("SANDBOX_WORKDIR", w);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup(dir: &Path, trainer: &str) -> std::path::PathBuf {
    let mut data = String::new();
    for i in 0..90 {
        data.push_str(&format!(
            "{{\"id\":\"s{i:03}\",\"text\":\"t {i}\",\"stats\":{{\"a\":{},\"b\":{}}}}}\n",
            (i * 7) % 13,
            (i * 5) % 11
        ));
    }
    std::fs::write(dir.join("data.jsonl"), data).unwrap();
    let config = format!(
        r#"
registries:
  trainers:
    t: {trainer}
phases:
  probe:
    - {{id: probe, kind: probe, params: {{dataset: data.jsonl, ops: [a, b], trainer: t}}}}
"#
    );
    let path = dir.join("workflow.yaml");
    std::fs::write(&path, config).unwrap();
    path
}

const SYNTH: &str = "{factory: synthetic, params: {base: {acc: 1.0}, weights: {a: 1.0}}}";

#[test]
fn run_then_resume_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), SYNTH);
    let work = dir.path().join("work");
    let cfg = config.to_str().unwrap();
    let w = work.to_str().unwrap();

    let out = sandbox(&["run", cfg, "--workdir", w, "--max-parallel", "4"], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("15 jobs: 15 executed, 0 skipped"), "{}", stdout(&out));
    let index = std::fs::read(work.join("reports/index.json")).unwrap();

    let out = sandbox(&["run", cfg, "--workdir", w, "--resume"], None);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("0 executed, 15 skipped"), "{}", stdout(&out));

    let out = sandbox(&["report", cfg, "--workdir", w], None);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("probe/ranking.csv"));
    assert_eq!(index, std::fs::read(work.join("reports/index.json")).unwrap());
}

#[test]
fn workdir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), SYNTH);
    let work = dir.path().join("from-env");
    let out = sandbox(&["run", config.to_str().unwrap()], Some(&work));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(work.join("ledger.jsonl").is_file());

    let out = sandbox(&["run", config.to_str().unwrap()], None);
    assert_eq!(code(&out), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w");
    let w = w.to_str().unwrap();
    // usage
    assert_eq!(code(&sandbox(&["run"], None)), 2);
    assert_eq!(code(&sandbox(&["run", "/no/such/file.yaml", "--workdir", w], None)), 2);
    assert_eq!(code(&sandbox(&["frobnicate"], None)), 2);
    // config
    let bad = dir.path().join("bad.yaml");
    std::fs::write(&bad, "registries: {hooks: [nope]}\n").unwrap();
    assert_eq!(code(&sandbox(&["run", bad.to_str().unwrap(), "--workdir", w], None)), 3);
    std::fs::write(&bad, "phases: {probe: [{id: x}]}\n").unwrap();
    assert_eq!(code(&sandbox(&["validate", bad.to_str().unwrap()], None)), 3);
    // job failure
    let failing = setup(dir.path(), "{factory: external, params: {command: [sh, -c, 'exit 1']}}");
    let out = sandbox(&["run", failing.to_str().unwrap(), "--workdir", w], None);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("blocked probe"), "{}", stdout(&out));
}

#[test]
fn validate_lists_expanded_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), SYNTH);
    let out = sandbox(&["validate", config.to_str().unwrap()], None);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("probe.trial.a.low"));
    assert!(text.trim_end().ends_with("ok: 15 jobs"));

    let out = sandbox(&["validate", "--dataset", dir.path().join("data.jsonl").to_str().unwrap()], None);
    assert_eq!(code(&out), 0);
    let dup = dir.path().join("dup.jsonl");
    std::fs::write(&dup, "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n").unwrap();
    assert_eq!(code(&sandbox(&["validate", "--dataset", dup.to_str().unwrap()], None)), 3);
}

#[test]
fn cost_prints_breakeven() {
    let out = sandbox(
        &["cost", "--iterations", "3", "--experiments", "4", "--ratio", "0.1", "--epsilon", "0.1", "--lower", "0", "--upper", "1"],
        None,
    );
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["preferred"], true);
    assert!((v["hoeffding"]["bound"].as_f64().unwrap() - (-0.02f64).exp()).abs() < 1e-12);
    assert_eq!(code(&sandbox(&["cost", "--iterations", "3", "--experiments", "1", "--ratio", "-1"], None)), 2);
}
