//! Tabular and JSON report emitters. Every emitter is byte-deterministic
//! for equal inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{CorrelationMatrix, OpRankRow};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::model::SplitLabel;
use crate::pools::ScheduleMode;

fn csv_bytes<F>(write: F) -> Vec<u8>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        write(&mut w).expect("writing CSV to memory cannot fail");
        w.flush().expect("flushing CSV to memory cannot fail");
    }
    buf
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report serializes");
    v.push(b'\n');
    v
}

/// `op,<split labels…>,best_split,best_value`, one row per operator in the
/// given order. The split columns follow the widest row.
pub fn emit_ranking(rows: &[OpRankRow]) -> Vec<u8> {
    let width = rows.iter().map(|r| r.changes.len()).max().unwrap_or(3);
    csv_bytes(|w| {
        let mut header = vec!["op".to_string()];
        header.extend((0..width).map(|i| SplitLabel::for_bucket(i, width).to_string()));
        header.extend(["best_split".into(), "best_value".into()]);
        w.write_record(&header)?;
        for r in rows {
            let mut rec = vec![r.op_name.clone()];
            rec.extend((0..width).map(|i| r.changes.get(i).map(|v| v.to_string()).unwrap_or_default()));
            rec.push(r.best_split.to_string());
            rec.push(r.best_value.to_string());
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// Square matrix with a leading label column.
pub fn emit_correlation(m: &CorrelationMatrix) -> Vec<u8> {
    csv_bytes(|w| {
        let mut header = vec![String::new()];
        header.extend(m.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in m.labels.iter().zip(&m.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// One point of a data-scaling curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub k: usize,
    pub mode: ScheduleMode,
    pub trained_samples: u64,
    pub target: usize,
    pub truncated: bool,
    pub mean: f64,
    pub baseline_mean: f64,
    /// Relative improvement over the equal-compute random baseline, percent.
    pub change: f64,
}

/// `k,mode,trained_samples,target,truncated,mean,baseline_mean,change`,
/// ascending `k`. An empty curve is the header alone.
pub fn emit_scaling_curve(points: &[ScalingPoint]) -> Vec<u8> {
    let mut points = points.to_vec();
    points.sort_by_key(|p| (p.k, p.mode));
    csv_bytes(|w| {
        w.write_record([
            "k",
            "mode",
            "trained_samples",
            "target",
            "truncated",
            "mean",
            "baseline_mean",
            "change",
        ])?;
        for p in &points {
            w.write_record([
                p.k.to_string(),
                p.mode.to_string(),
                p.trained_samples.to_string(),
                p.target.to_string(),
                p.truncated.to_string(),
                p.mean.to_string(),
                p.baseline_mean.to_string(),
                p.change.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Result of training one proposed recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeResult {
    pub recipe: String,
    pub order: usize,
    pub pool_size: usize,
    pub mean: f64,
    pub change: f64,
}

/// Recipes by descending change, ties by label.
pub fn emit_recipe_ranking(results: &[RecipeResult]) -> Vec<u8> {
    let mut rows = results.to_vec();
    rows.sort_by(|a, b| b.change.total_cmp(&a.change).then_with(|| a.recipe.cmp(&b.recipe)));
    csv_bytes(|w| {
        w.write_record(["recipe", "order", "pool_size", "mean", "change"])?;
        for r in &rows {
            w.write_record([
                r.recipe.clone(),
                r.order.to_string(),
                r.pool_size.to_string(),
                r.mean.to_string(),
                r.change.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// One hyperparameter point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub hyperparams: serde_json::Map<String, serde_json::Value>,
    pub baseline: bool,
    pub mean: f64,
    pub change: f64,
}

/// Grid order; hyperparameters as compact JSON.
pub fn emit_sweep(points: &[SweepPoint]) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record(["index", "hyperparams", "baseline", "mean", "change"])?;
        for p in points {
            w.write_record([
                p.index.to_string(),
                serde_json::to_string(&p.hyperparams).expect("map serializes"),
                p.baseline.to_string(),
                p.mean.to_string(),
                p.change.to_string(),
            ])?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportIndex {
    pub files: Vec<IndexedFile>,
}

/// Replaces `dir` with `files` (relative path, bytes) plus an `index.json`
/// listing each file's digest, in path order.
pub fn write_bundle(dir: &Path, files: Vec<(String, Vec<u8>)>) -> Result<ReportIndex> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = files;
    files.sort_by(|a, b| a.0.cmp(&b.0));
    let mut index = ReportIndex::default();
    for (rel, bytes) in files {
        if rel == "index.json" || Path::new(&rel).is_absolute() || rel.split('/').any(|c| c == "..") {
            return Err(Error::Invalid(format!("report path {rel:?} is not allowed")));
        }
        let path: PathBuf = dir.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        index.files.push(IndexedFile {
            path: rel,
            sha256: sha256_hex(&bytes),
        });
    }
    let path = dir.join("index.json");
    std::fs::write(&path, json_bytes(&index)).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::pearson_matrix;

    #[test]
    fn ranking_header_and_rows() {
        let rows = vec![
            OpRankRow::tertiles("a", 1.5, -2.0, 0.0).unwrap(),
            OpRankRow::tertiles("b", 0.0, 0.0, 0.0).unwrap(),
        ];
        let csv = String::from_utf8(emit_ranking(&rows)).unwrap();
        assert_eq!(csv, "op,low,mid,high,best_split,best_value\na,1.5,-2,0,low,1.5\nb,0,0,0,low,0\n");
    }

    #[test]
    fn ranking_with_four_buckets() {
        let rows = vec![OpRankRow::new("x", vec![0.0, 1.0, 2.0, 3.0]).unwrap()];
        let csv = String::from_utf8(emit_ranking(&rows)).unwrap();
        assert!(csv.starts_with("op,b1,b2,b3,b4,best_split,best_value\n"), "{csv}");
        assert!(csv.ends_with("x,0,1,2,3,b4,3\n"));
    }

    #[test]
    fn empty_scaling_curve_is_header_only() {
        let csv = String::from_utf8(emit_scaling_curve(&[])).unwrap();
        assert_eq!(csv, "k,mode,trained_samples,target,truncated,mean,baseline_mean,change\n");
    }

    #[test]
    fn scaling_curve_sorts_by_k() {
        let p = |k| ScalingPoint {
            k,
            mode: ScheduleMode::Repetitive,
            trained_samples: k as u64 * 10,
            target: k * 10,
            truncated: false,
            mean: 1.0,
            baseline_mean: 1.0,
            change: 0.0,
        };
        let csv = String::from_utf8(emit_scaling_curve(&[p(4), p(1), p(2)])).unwrap();
        let ks: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(ks, ["1", "2", "4"]);
    }

    #[test]
    fn correlation_csv_is_square() {
        let m = pearson_matrix([("a", vec![1.0, 2.0, 3.0]), ("b", vec![3.0, 2.0, 1.0])]).unwrap();
        let csv = String::from_utf8(emit_correlation(&m)).unwrap();
        assert_eq!(csv, ",a,b\na,1,-1\nb,-1,1\n");
    }

    #[test]
    fn sweep_quotes_json_cells() {
        let mut hp = serde_json::Map::new();
        hp.insert("lr".into(), 0.1.into());
        hp.insert("prompt".into(), "a".into());
        let csv = emit_sweep(&[SweepPoint {
            index: 0,
            hyperparams: hp,
            baseline: true,
            mean: 2.0,
            change: 0.0,
        }]);
        let text = String::from_utf8(csv).unwrap();
        assert!(text.contains(r#""{""lr"":0.1,""prompt"":""a""}""#), "{text}");
    }

    #[test]
    fn bundle_is_deterministic_and_indexed() {
        let dir = tempfile::tempdir().unwrap();
        let files = || vec![("b.csv".to_string(), b"x\n".to_vec()), ("a/c.json".to_string(), b"{}\n".to_vec())];
        let i1 = write_bundle(dir.path(), files()).unwrap();
        let first = std::fs::read(dir.path().join("index.json")).unwrap();
        let i2 = write_bundle(dir.path(), files().into_iter().rev().collect()).unwrap();
        assert_eq!(i1, i2);
        assert_eq!(first, std::fs::read(dir.path().join("index.json")).unwrap());
        assert_eq!(i1.files[0].path, "a/c.json");
        assert_eq!(i1.files[1].sha256, sha256_hex(b"x\n"));
        assert!(write_bundle(dir.path(), vec![("../x".into(), vec![])]).is_err());
    }
}
