use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};

/// One record of a corpus: text, optional media references and the flat
/// statistics map written by operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty", with = "stat_map")]
    pub stats: BTreeMap<String, f64>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            media: None,
            stats: BTreeMap::new(),
        }
    }

    pub fn with_stat(mut self, name: impl Into<String>, value: f64) -> Self {
        self.stats.insert(name.into(), value);
        self
    }

    pub fn stat(&self, name: &str) -> Result<f64> {
        self.stats
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingStat {
                sample_id: self.id.clone(),
                stat: name.to_owned(),
            })
    }
}

/// Stat values are finite numbers in valid data, but the file form accepts
/// `null`, `"NaN"` and `"inf"` so that broken inputs reach the validator
/// instead of failing to parse.
mod stat_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Wire {
        Num(f64),
        Text(String),
        Null(()),
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let wire: BTreeMap<&str, Wire> = map
            .iter()
            .map(|(k, &v)| {
                let w = if v.is_finite() {
                    Wire::Num(v)
                } else if v.is_nan() {
                    Wire::Text("NaN".into())
                } else if v > 0.0 {
                    Wire::Text("inf".into())
                } else {
                    Wire::Text("-inf".into())
                };
                (k.as_str(), w)
            })
            .collect();
        wire.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let wire = BTreeMap::<String, Wire>::deserialize(d)?;
        wire.into_iter()
            .map(|(k, w)| {
                let v = match w {
                    Wire::Num(v) => v,
                    Wire::Null(()) => f64::NAN,
                    Wire::Text(t) => match t.to_ascii_lowercase().as_str() {
                        "nan" => f64::NAN,
                        "inf" | "+inf" | "infinity" => f64::INFINITY,
                        "-inf" | "-infinity" => f64::NEG_INFINITY,
                        _ => return Err(D::Error::custom(format!("stat {k:?}: not a number: {t:?}"))),
                    },
                };
                Ok((k, v))
            })
            .collect()
    }
}

/// Ingestion form: the id is optional.
#[derive(Deserialize)]
struct RawSample {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    media: Option<BTreeMap<String, String>>,
    #[serde(default, with = "stat_map")]
    stats: BTreeMap<String, f64>,
}

/// An ordered collection of samples with an id index.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
    index: HashMap<String, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        let mut index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            index.entry(s.id.clone()).or_insert(i);
        }
        Self { samples, index }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    /// First sample carrying `id`.
    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.index.get(id).map(|&i| &self.samples[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Resolves ids to samples, failing on the first unknown id.
    pub fn select<'a, I>(&self, ids: I) -> Result<Vec<&Sample>>
    where
        I: IntoIterator<Item = &'a String>,
    {
        ids.into_iter()
            .map(|id| {
                self.get(id)
                    .ok_or_else(|| Error::Invalid(format!("pool references unknown sample id {id:?}")))
            })
            .collect()
    }

    /// Reads JSON Lines. Records without an id get their zero-padded record
    /// index as id. Blank lines are skipped.
    pub fn from_reader<R: Read>(reader: R, context: &str) -> Result<Self> {
        let mut samples = Vec::new();
        let reader = BufReader::new(reader);
        let mut record = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(context, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawSample = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{context} line {}", lineno + 1), e))?;
            samples.push(Sample {
                id: raw.id.unwrap_or_else(|| format!("{record:08}")),
                text: raw.text,
                media: raw.media,
                stats: raw.stats,
            });
            record += 1;
        }
        Ok(Self::new(samples))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Digest of the canonical JSONL form.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_jsonl_bytes())
    }
}

impl FromIterator<Sample> for Dataset {
    fn from_iter<T: IntoIterator<Item = Sample>>(iter: T) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonFiniteStat {
    pub sample_id: String,
    pub stat: String,
}

/// Findings of [`validate_dataset`]. Validation never mutates the dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    /// Ids that occur more than once, each listed once.
    pub duplicate_ids: Vec<String>,
    pub non_finite_stats: Vec<NonFiniteStat>,
    pub empty_texts: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.duplicate_ids.is_empty() && self.non_finite_stats.is_empty() && self.empty_texts.is_empty()
    }
}

pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut seen = HashSet::new();
    let mut dup_seen = HashSet::new();
    let mut report = ValidationReport {
        samples: dataset.len(),
        ..Default::default()
    };
    for s in dataset.iter() {
        if !seen.insert(s.id.as_str()) && dup_seen.insert(s.id.as_str()) {
            report.duplicate_ids.push(s.id.clone());
        }
        for (name, v) in &s.stats {
            if !v.is_finite() {
                report.non_finite_stats.push(NonFiniteStat {
                    sample_id: s.id.clone(),
                    stat: name.clone(),
                });
            }
        }
        if s.text.is_empty() {
            report.empty_texts.push(s.id.clone());
        }
    }
    report
}

/// Reads and validates a dataset file. Unreadable or unparsable input is an
/// `Err`; data findings are in the report.
pub fn validate_file(path: &Path) -> Result<ValidationReport> {
    Ok(validate_dataset(&Dataset::read_jsonl(path)?))
}
