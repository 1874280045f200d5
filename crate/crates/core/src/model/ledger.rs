use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Completed,
    /// Trial cut short by the early-stop policy; its artifacts are final.
    EarlyStopped,
    Failed,
    /// Not run because a dependency failed.
    Blocked,
}

impl JobStatus {
    pub fn is_done(self) -> bool {
        matches!(self, JobStatus::Completed | JobStatus::EarlyStopped)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub job_id: String,
    pub job_kind: String,
    pub input_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_digest: Option<String>,
    pub status: JobStatus,
    pub seed: u64,
    pub started_ms: u64,
    pub finished_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Append-only record of every job, optionally mirrored to a JSONL file.
///
/// Each job id maps to its latest entry. A finished entry is final: recording
/// the same `(job_id, input_digest)` again with a different output digest is
/// rejected. A job whose inputs changed may be recorded anew.
#[derive(Debug, Default)]
pub struct RunLedger {
    path: Option<PathBuf>,
    entries: Vec<LedgerEntry>,
    latest: HashMap<String, usize>,
}

impl RunLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a ledger file, replaying existing lines.
    pub fn open(path: &Path) -> Result<Self> {
        let mut ledger = RunLedger {
            path: None,
            ..Default::default()
        };
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<LedgerEntry>(&line) {
                    Ok(entry) => ledger.push(entry)?,
                    // A torn final line from a killed writer is dropped.
                    Err(_) => log::warn!("{}: ignoring unreadable ledger line {}", path.display(), i + 1),
                }
            }
            // Terminate a torn line so the next append starts cleanly.
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            if bytes.last().is_some_and(|b| *b != b'\n') {
                let mut f = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
                f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
        }
        ledger.path = Some(path.to_owned());
        Ok(ledger)
    }

    /// Starts an empty ledger at `path`, discarding any previous file.
    pub fn create(path: &Path) -> Result<Self> {
        File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(RunLedger {
            path: Some(path.to_owned()),
            ..Default::default()
        })
    }

    fn check(&self, entry: &LedgerEntry) -> Result<()> {
        if let Some(&i) = self.latest.get(&entry.job_id) {
            let prev = &self.entries[i];
            if prev.status.is_done()
                && prev.input_digest == entry.input_digest
                && prev.output_digest != entry.output_digest
            {
                return Err(Error::Ledger(format!(
                    "completed job {:?} cannot change its output digest",
                    entry.job_id
                )));
            }
        }
        Ok(())
    }

    fn push(&mut self, entry: LedgerEntry) -> Result<()> {
        self.check(&entry)?;
        self.latest.insert(entry.job_id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn record(&mut self, entry: LedgerEntry) -> Result<()> {
        self.check(&entry)?;
        if let Some(path) = &self.path {
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let mut line = serde_json::to_vec(&entry).expect("entry serializes");
            line.push(b'\n');
            file.write_all(&line).map_err(|e| Error::io(path, e))?;
        }
        self.push(entry)
    }

    /// Every line ever recorded, in append order.
    pub fn history(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Latest entry per job id, sorted by job id.
    pub fn entries(&self) -> Vec<&LedgerEntry> {
        let mut v: Vec<_> = self.latest.values().map(|&i| &self.entries[i]).collect();
        v.sort_by(|a, b| a.job_id.cmp(&b.job_id));
        v
    }

    pub fn latest(&self, job_id: &str) -> Option<&LedgerEntry> {
        self.latest.get(job_id).map(|&i| &self.entries[i])
    }

    /// The finished entry for `job_id` if its inputs match.
    pub fn finished(&self, job_id: &str, input_digest: &str) -> Option<&LedgerEntry> {
        self.latest(job_id)
            .filter(|e| e.status.is_done() && e.input_digest == input_digest)
    }

    pub fn len(&self) -> usize {
        self.latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, input: &str, output: &str) -> LedgerEntry {
        LedgerEntry {
            job_id: id.into(),
            job_kind: "k".into(),
            input_digest: input.into(),
            output_digest: Some(output.into()),
            status: JobStatus::Completed,
            seed: 1,
            started_ms: 0,
            finished_ms: 0,
            note: None,
        }
    }

    #[test]
    fn completed_digests_are_final() {
        let mut l = RunLedger::in_memory();
        l.record(entry("a", "i", "o")).unwrap();
        assert!(l.record(entry("a", "i", "other")).is_err());
        // changed inputs supersede
        l.record(entry("a", "i2", "o2")).unwrap();
        assert_eq!(l.latest("a").unwrap().input_digest, "i2");
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn file_replay_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let mut l = RunLedger::create(&path).unwrap();
        l.record(entry("b", "i", "o")).unwrap();
        l.record(entry("a", "i", "o")).unwrap();
        let replay = RunLedger::open(&path).unwrap();
        assert_eq!(replay.entries(), l.entries());
        assert!(replay.finished("a", "i").is_some());
        assert!(replay.finished("a", "x").is_none());
    }

    #[test]
    fn torn_last_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let mut l = RunLedger::create(&path).unwrap();
        l.record(entry("a", "i", "o")).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"job_id\":\"b\",\"job_").unwrap();
        let mut reopened = RunLedger::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
        reopened.record(entry("c", "i", "o")).unwrap();
        assert_eq!(RunLedger::open(&path).unwrap().len(), 2);
    }

    #[test]
    fn rejected_entry_is_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let mut l = RunLedger::create(&path).unwrap();
        l.record(entry("a", "i", "o")).unwrap();
        assert!(l.record(entry("a", "i", "x")).is_err());
        assert_eq!(RunLedger::open(&path).unwrap().history().len(), 1);
    }
}
