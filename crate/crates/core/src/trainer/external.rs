//! Process boundary for real trainers.
//!
//! The adapter writes a manifest JSON and appends its path to the command.
//! The trainer writes a metrics JSON to the manifest's `output` path:
//! `{"metrics": {name: number}, "trained_samples": int, "wall_time_s": number,
//! "checkpoint_out"?: path}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::MetricVector;
use crate::ops::scorer::tail;
use crate::trainer::{TrainOutcome, TrainRequest, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerManifest {
    pub pool_manifest: PathBuf,
    pub dataset: PathBuf,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, Value>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_in: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub metrics: MetricVector,
    pub checkpoint_out: Option<PathBuf>,
}

const METRICS_KEYS: [&str; 4] = ["metrics", "trained_samples", "wall_time_s", "checkpoint_out"];

/// Parses a metrics file. Unknown top-level keys are logged and ignored.
pub fn parse_metrics_file(path: &Path) -> Result<MetricsFile> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::TrainerProtocol(format!("no metrics file at {}: {e}", path.display())))?;
    let value: Value = serde_json::from_slice(&bytes)
        .map_err(|e| Error::TrainerProtocol(format!("metrics file {} is not JSON: {e}", path.display())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::TrainerProtocol("metrics file must hold a JSON object".into()))?;
    for key in obj.keys().filter(|k| !METRICS_KEYS.contains(&k.as_str())) {
        log::warn!("metrics file {} has unknown key {key:?}", path.display());
    }
    let raw = obj
        .get("metrics")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::TrainerProtocol("metrics file has no \"metrics\" object".into()))?;
    let mut metrics = BTreeMap::new();
    for (name, v) in raw {
        let x = v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::TrainerProtocol(format!("metric {name:?} is not a finite number")))?;
        metrics.insert(name.clone(), x);
    }
    let trained_samples = match obj.get("trained_samples") {
        None => 0,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Error::TrainerProtocol("trained_samples must be a non-negative integer".into()))?,
    };
    let wall_time = match obj.get("wall_time_s") {
        None => 0.0,
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::TrainerProtocol("wall_time_s must be a number".into()))?,
    };
    let checkpoint_out = match obj.get("checkpoint_out") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(Error::TrainerProtocol("checkpoint_out must be a path string".into())),
    };
    let metrics = MetricVector::new(metrics, trained_samples, wall_time)
        .map_err(|e| Error::TrainerProtocol(e.to_string()))?;
    Ok(MetricsFile {
        metrics,
        checkpoint_out,
    })
}

/// Writes `manifest` next to its output file, runs `command <manifest>`,
/// and parses the metrics it leaves behind.
pub fn external_train_eval(manifest: &TrainerManifest, command: &[String]) -> Result<MetricsFile> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::Invalid("trainer command is empty".into()))?;
    let dir = manifest.output.parent().unwrap_or(Path::new("."));
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    let out = Command::new(program)
        .args(args)
        .arg(&manifest_path)
        .stdin(Stdio::null())
        .output()
        .map_err(|e| Error::TrainerFailed {
            status: "spawn failure".into(),
            stderr_tail: e.to_string(),
        })?;
    if !out.status.success() {
        return Err(Error::TrainerFailed {
            status: out.status.to_string(),
            stderr_tail: tail(&out.stderr, 20),
        });
    }
    parse_metrics_file(&manifest.output)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalTrainer {
    pub command: Vec<String>,
    /// Whether the process understands `checkpoint_in`.
    #[serde(default)]
    pub checkpoints: bool,
}

impl ExternalTrainer {
    pub fn new<I, S>(command: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            command: command.into_iter().map(Into::into).collect(),
            checkpoints: false,
        }
    }
}

impl Trainer for ExternalTrainer {
    fn name(&self) -> &str {
        "external"
    }

    fn train_eval(&self, request: &TrainRequest<'_>) -> Result<TrainOutcome> {
        let workdir = request.workdir;
        let pool_manifest = request.pool.write_manifest(workdir, "pool")?;
        let dataset = match request.dataset_path {
            Some(p) => p.to_path_buf(),
            None => {
                let p = workdir.join("dataset.jsonl");
                request.dataset.write_jsonl(&p)?;
                p
            }
        };
        let manifest = TrainerManifest {
            pool_manifest,
            dataset,
            hyperparams: request.hyperparams.clone(),
            seed: request.seed,
            checkpoint_in: request.checkpoint_in.map(Path::to_path_buf),
            output: workdir.join("metrics.json"),
        };
        let parsed = external_train_eval(&manifest, &self.command)?;
        let checkpoint_out = parsed.checkpoint_out.map(|p| if p.is_relative() { workdir.join(p) } else { p });
        Ok(TrainOutcome {
            metrics: parsed.metrics,
            checkpoint_out,
        })
    }

    fn supports_checkpoints(&self) -> bool {
        self.checkpoints
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DataPool, Dataset, Sample, SplitLabel};

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into(), "trainer".into()]
    }

    fn manifest(dir: &Path) -> TrainerManifest {
        TrainerManifest {
            pool_manifest: dir.join("pool.json"),
            dataset: dir.join("d.jsonl"),
            hyperparams: BTreeMap::new(),
            seed: 1,
            checkpoint_in: None,
            output: dir.join("metrics.json"),
        }
    }

    /// Reads the output path out of the manifest with sed and writes `body`.
    fn writer(body: &str) -> Vec<String> {
        sh(&format!(
            r#"out=$(tr -d '\n' < "$1" | sed -E 's/.*"output": *"([^"]*)".*/\1/'); printf '%s' '{body}' > "$out""#
        ))
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        let got = external_train_eval(
            &m,
            &writer(r#"{"metrics":{"acc":0.5},"trained_samples":10,"wall_time_s":0.1}"#),
        )
        .unwrap();
        assert_eq!(got.metrics.get("acc"), Some(0.5));
        assert_eq!(got.metrics.trained_samples(), 10);
        assert_eq!(got.metrics.wall_time(), 0.1);
        let written: TrainerManifest =
            serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(written, m);
    }

    #[test]
    fn failure_carries_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let err = external_train_eval(&manifest(dir.path()), &sh("echo boom >&2; exit 1")).unwrap_err();
        match err {
            Error::TrainerFailed { stderr_tail, .. } => assert_eq!(stderr_tail, "boom"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn protocol_errors() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        for body in [r#"{"trained_samples":1}"#, r#"{"metrics":{"a":"x"}}"#, r#"{"metrics":{}}"#, "not json"] {
            let err = external_train_eval(&m, &writer(body)).unwrap_err();
            assert!(matches!(err, Error::TrainerProtocol(_)), "{body}: {err}");
        }
        let err = external_train_eval(&m, &sh("true")).unwrap_err();
        assert!(matches!(err, Error::TrainerProtocol(_)));
    }

    #[test]
    fn adapter_writes_pool_and_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let d: Dataset = (0..3).map(|i| Sample::new(format!("s{i}"), "t")).collect();
        let p = DataPool::new("p", vec!["s0".into(), "s2".into()], vec![], SplitLabel::Random, 2, None).unwrap();
        let hp = BTreeMap::new();
        // counts pool ids and reports them
        let t = ExternalTrainer::new(sh(
            r#"out=$(tr -d '\n' < "$1" | sed -E 's/.*"output": *"([^"]*)".*/\1/'); d=$(dirname "$out"); n=$(wc -l < "$d/pool.ids" | tr -d ' '); printf '{"metrics":{"n":%s},"trained_samples":%s,"checkpoint_out":"ck"}' "$n" "$n" > "$out""#,
        ));
        let out = t
            .train_eval(&TrainRequest {
                pool: &p,
                dataset: &d,
                dataset_path: None,
                hyperparams: &hp,
                seed: 0,
                checkpoint_in: None,
                workdir: dir.path(),
            })
            .unwrap();
        assert_eq!(out.metrics.get("n"), Some(2.0));
        assert_eq!(out.checkpoint_out, Some(dir.path().join("ck")));
        assert!(dir.path().join("dataset.jsonl").exists());
    }
}
