//! Process boundary for model-based statistics (NSFW, aesthetics, image-text
//! similarity and the like).
//!
//! Protocol: the batch is written as JSONL `{"id","text","media"?}` to a
//! temporary file whose path is appended as the command's final argument.
//! The scorer answers with JSONL `{"id","score"}` on stdout, or in the file
//! named by an environment variable when [`ScorerOutput::EnvFile`] is set.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::process::{Command, Stdio};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Sample;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScorerOutput {
    #[default]
    Stdout,
    EnvFile {
        var: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerCommand {
    /// Program and leading arguments; the input path is appended.
    pub argv: Vec<String>,
    #[serde(default)]
    pub output: ScorerOutput,
}

impl ScorerCommand {
    pub fn new<I, S>(argv: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            argv: argv.into_iter().map(Into::into).collect(),
            output: ScorerOutput::Stdout,
        }
    }

    pub fn with_output(mut self, output: ScorerOutput) -> Self {
        self.output = output;
        self
    }

    fn display(&self) -> String {
        self.argv.join(" ")
    }
}

#[derive(Serialize)]
struct ScorerInput<'a> {
    id: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    media: Option<&'a BTreeMap<String, String>>,
}

#[derive(Deserialize)]
struct ScorerLine {
    id: String,
    score: serde_json::Value,
}

pub(crate) fn tail(bytes: &[u8], max_lines: usize) -> String {
    let text = String::from_utf8_lossy(bytes);
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(max_lines)..].join("\n")
}

/// Scores one batch. Every input id must come back with a finite score.
pub fn external_score(batch: &[Sample], command: &ScorerCommand) -> Result<BTreeMap<String, f64>> {
    let (program, args) = command
        .argv
        .split_first()
        .ok_or_else(|| Error::Invalid("scorer command is empty".into()))?;

    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let input_path = dir.path().join("batch.jsonl");
    {
        let mut f = std::fs::File::create(&input_path).map_err(|e| Error::io(&input_path, e))?;
        for s in batch {
            let line = ScorerInput {
                id: &s.id,
                text: &s.text,
                media: s.media.as_ref(),
            };
            serde_json::to_writer(&mut f, &line).expect("scorer input serializes");
            f.write_all(b"\n").map_err(|e| Error::io(&input_path, e))?;
        }
    }

    let mut cmd = Command::new(program);
    cmd.args(args).arg(&input_path).stdin(Stdio::null());
    let output_path = dir.path().join("scores.jsonl");
    if let ScorerOutput::EnvFile { var } = &command.output {
        cmd.env(var, &output_path);
    }
    let out = cmd.output().map_err(|e| Error::ScorerFailed {
        command: command.display(),
        status: "spawn failure".into(),
        stderr_tail: e.to_string(),
    })?;
    if !out.status.success() {
        return Err(Error::ScorerFailed {
            command: command.display(),
            status: out.status.to_string(),
            stderr_tail: tail(&out.stderr, 20),
        });
    }
    let body = match &command.output {
        ScorerOutput::Stdout => String::from_utf8_lossy(&out.stdout).into_owned(),
        ScorerOutput::EnvFile { .. } => {
            std::fs::read_to_string(&output_path).map_err(|e| Error::ScorerProtocol(format!(
                "scorer wrote no output file at {}: {e}",
                output_path.display()
            )))?
        }
    };

    let expected: HashSet<&str> = batch.iter().map(|s| s.id.as_str()).collect();
    let mut scores = BTreeMap::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ScorerLine = serde_json::from_str(line)
            .map_err(|e| Error::ScorerProtocol(format!("output line {}: {e}", i + 1)))?;
        if !expected.contains(parsed.id.as_str()) {
            return Err(Error::ScorerProtocol(format!("unexpected id {:?}", parsed.id)));
        }
        let score = parsed
            .score
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::ScorerProtocol(format!("non-finite score for id {:?}", parsed.id)))?;
        scores.insert(parsed.id, score);
    }
    if let Some(missing) = batch.iter().find(|s| !scores.contains_key(&s.id)) {
        return Err(Error::ScorerMissingId(missing.id.clone()));
    }
    Ok(scores)
}

/// Splits `samples` into batches and scores them with at most
/// `max_parallel` scorer processes alive at once.
pub fn external_score_batched(
    samples: &[Sample],
    command: &ScorerCommand,
    batch_size: usize,
    max_parallel: usize,
) -> Result<BTreeMap<String, f64>> {
    let batch_size = batch_size.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_parallel.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("cannot build scorer pool: {e}")))?;
    let parts: Vec<BTreeMap<String, f64>> = pool.install(|| {
        samples
            .par_chunks(batch_size)
            .map(|chunk| external_score(chunk, command))
            .collect::<Result<_>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn samples(ids: &[&str]) -> Vec<Sample> {
        ids.iter().map(|id| Sample::new(*id, format!("text {id}"))).collect()
    }

    fn sed_scorer(script: &str) -> ScorerCommand {
        ScorerCommand::new(["sh", "-c", script, "scorer"])
    }

    const CONSTANT: &str = r#"sed -E 's/^\{"id":("[^"]*").*/{"id":\1,"score":0.5}/' "$1""#;

    #[test]
    fn constant_scorer() {
        let scores = external_score(&samples(&["a", "b"]), &sed_scorer(CONSTANT)).unwrap();
        assert_eq!(scores.len(), 2);
        assert!(scores.values().all(|&v| v == 0.5));
    }

    #[test]
    fn missing_id_is_named() {
        let cmd = sed_scorer(r#"head -n 1 "$1" | sed -E 's/^\{"id":("[^"]*").*/{"id":\1,"score":1}/'"#);
        let err = external_score(&samples(&["a", "b"]), &cmd).unwrap_err();
        assert!(matches!(err, Error::ScorerMissingId(ref id) if id == "b"), "{err}");
    }

    #[test]
    fn nonzero_exit_carries_stderr() {
        let err = external_score(&samples(&["a"]), &sed_scorer("echo boom >&2; exit 3")).unwrap_err();
        match err {
            Error::ScorerFailed { stderr_tail, .. } => assert_eq!(stderr_tail, "boom"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_finite_score_is_rejected() {
        let cmd = sed_scorer(r#"sed -E 's/^\{"id":("[^"]*").*/{"id":\1,"score":"NaN"}/' "$1""#);
        assert!(matches!(
            external_score(&samples(&["a"]), &cmd),
            Err(Error::ScorerProtocol(_))
        ));
    }

    #[test]
    fn env_file_output() {
        let script = r#"sed -E 's/^\{"id":("[^"]*").*/{"id":\1,"score":2}/' "$1" > "$SCORES_OUT""#;
        let cmd = sed_scorer(script).with_output(ScorerOutput::EnvFile {
            var: "SCORES_OUT".into(),
        });
        let scores = external_score(&samples(&["x"]), &cmd).unwrap();
        assert_eq!(scores["x"], 2.0);
    }

    #[test]
    fn batched_scoring_is_deterministic() {
        let s = samples(&["a", "b", "c", "d", "e"]);
        let first = external_score_batched(&s, &sed_scorer(CONSTANT), 2, 2).unwrap();
        let second = external_score_batched(&s, &sed_scorer(CONSTANT), 2, 2).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.len(), 5);
    }
}
