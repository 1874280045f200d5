use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::digest::ContentHasher;
use crate::error::{Error, Result};
use crate::model::recipe::{KeepRange, OperatorConfig};

/// Which slice of the experiment design a pool is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitLabel {
    Low,
    Mid,
    High,
    /// Bucket `i` (1-based) for split counts other than two or three.
    Bucket(u8),
    Random,
    Composed,
    /// Dedup-merged union of pyramid pools.
    Merged,
}

impl SplitLabel {
    /// Label of bucket `index` (0-based, ascending stat) out of `count`.
    pub fn for_bucket(index: usize, count: usize) -> Self {
        match (count, index) {
            (3, 0) | (2, 0) => SplitLabel::Low,
            (3, 1) => SplitLabel::Mid,
            (3, 2) | (2, 1) => SplitLabel::High,
            _ => SplitLabel::Bucket(index as u8 + 1),
        }
    }

    pub fn is_split(&self) -> bool {
        matches!(self, SplitLabel::Low | SplitLabel::Mid | SplitLabel::High | SplitLabel::Bucket(_))
    }
}

impl fmt::Display for SplitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitLabel::Low => f.write_str("low"),
            SplitLabel::Mid => f.write_str("mid"),
            SplitLabel::High => f.write_str("high"),
            SplitLabel::Bucket(i) => write!(f, "b{i}"),
            SplitLabel::Random => f.write_str("random"),
            SplitLabel::Composed => f.write_str("composed"),
            SplitLabel::Merged => f.write_str("merged"),
        }
    }
}

impl FromStr for SplitLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "low" => SplitLabel::Low,
            "mid" | "middle" => SplitLabel::Mid,
            "high" => SplitLabel::High,
            "random" => SplitLabel::Random,
            "composed" => SplitLabel::Composed,
            "merged" => SplitLabel::Merged,
            other => match other.strip_prefix('b').and_then(|n| n.parse::<u8>().ok()) {
                Some(i) if i >= 1 => SplitLabel::Bucket(i),
                _ => return Err(Error::Invalid(format!("unknown split label {s:?}"))),
            },
        })
    }
}

impl Serialize for SplitLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SplitLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One applied filter in a pool's history.
pub type ProvenanceStep = OperatorConfig;

/// A materialized subset of a dataset, by sample id.
///
/// Invariants checked at construction:
/// - sample ids are unique;
/// - provenance is empty exactly for `random` pools (merged pools may carry
///   an empty common provenance);
/// - a `composed` pool's `pyramid_level` equals its provenance length.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPool {
    pool_id: String,
    sample_ids: Vec<String>,
    provenance: Vec<ProvenanceStep>,
    split_label: SplitLabel,
    declared_size: usize,
    pyramid_level: Option<usize>,
}

impl DataPool {
    pub fn new(
        pool_id: impl Into<String>,
        sample_ids: Vec<String>,
        provenance: Vec<ProvenanceStep>,
        split_label: SplitLabel,
        declared_size: usize,
        pyramid_level: Option<usize>,
    ) -> Result<Self> {
        let pool_id = pool_id.into();
        let mut seen = HashSet::with_capacity(sample_ids.len());
        if let Some(dup) = sample_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Invalid(format!("pool {pool_id:?} lists sample {dup:?} twice")));
        }
        match split_label {
            SplitLabel::Random if !provenance.is_empty() => {
                return Err(Error::Invalid(format!("random pool {pool_id:?} cannot carry provenance")));
            }
            SplitLabel::Random | SplitLabel::Merged => {}
            _ if provenance.is_empty() => {
                return Err(Error::Invalid(format!("{split_label} pool {pool_id:?} needs provenance")));
            }
            _ => {}
        }
        if split_label == SplitLabel::Composed && pyramid_level != Some(provenance.len()) {
            return Err(Error::Invalid(format!(
                "composed pool {pool_id:?} has level {pyramid_level:?} but {} provenance steps",
                provenance.len()
            )));
        }
        Ok(Self {
            pool_id,
            sample_ids,
            provenance,
            split_label,
            declared_size,
            pyramid_level,
        })
    }

    pub fn pool_id(&self) -> &str {
        &self.pool_id
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn provenance(&self) -> &[ProvenanceStep] {
        &self.provenance
    }

    pub fn split_label(&self) -> SplitLabel {
        self.split_label
    }

    pub fn declared_size(&self) -> usize {
        self.declared_size
    }

    pub fn pyramid_level(&self) -> Option<usize> {
        self.pyramid_level
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    /// True when fewer samples were available than declared.
    pub fn is_short(&self) -> bool {
        self.sample_ids.len() < self.declared_size
    }

    pub fn with_id(mut self, pool_id: impl Into<String>) -> Self {
        self.pool_id = pool_id.into();
        self
    }

    /// Order-independent digest of the pool's membership.
    pub fn content_digest(&self) -> String {
        let mut ids: Vec<&str> = self.sample_ids.iter().map(String::as_str).collect();
        ids.sort_unstable();
        let mut h = ContentHasher::new();
        for id in ids {
            h.field(id);
        }
        h.finish()
    }

    /// Writes `<stem>.json` and `<stem>.ids` into `dir`; returns the manifest
    /// path.
    pub fn write_manifest(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let ids_name = format!("{stem}.ids");
        let ids_path = dir.join(&ids_name);
        let mut ids = String::with_capacity(self.sample_ids.len() * 10);
        for id in &self.sample_ids {
            ids.push_str(id);
            ids.push('\n');
        }
        std::fs::write(&ids_path, ids).map_err(|e| Error::io(&ids_path, e))?;
        let manifest = PoolManifest {
            pool_id: self.pool_id.clone(),
            split_label: self.split_label,
            provenance: self.provenance.clone(),
            sample_ids_file: PathBuf::from(ids_name),
            declared_size: self.declared_size,
            pyramid_level: self.pyramid_level,
        };
        let path = dir.join(format!("{stem}.json"));
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read_manifest(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: PoolManifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path.display().to_string(), e))?;
        let ids_path = if m.sample_ids_file.is_absolute() {
            m.sample_ids_file.clone()
        } else {
            path.parent().unwrap_or(Path::new(".")).join(&m.sample_ids_file)
        };
        let ids = std::fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
        let sample_ids = ids.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect();
        DataPool::new(m.pool_id, sample_ids, m.provenance, m.split_label, m.declared_size, m.pyramid_level)
    }
}

/// File form of a pool: the id list lives in a side file, one id per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub pool_id: String,
    pub split_label: SplitLabel,
    pub provenance: Vec<ProvenanceStep>,
    pub sample_ids_file: PathBuf,
    pub declared_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pyramid_level: Option<usize>,
}

/// Keep range from each step of a provenance chain, by operator.
pub fn provenance_ranges(steps: &[ProvenanceStep]) -> BTreeMap<&str, KeepRange> {
    steps.iter().map(|s| (s.op_name.as_str(), s.keep_range)).collect()
}
