use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::digest::{derive_seed, file_digest, ContentHasher};
use crate::error::{Error, Result};
use crate::model::{DataPool, Dataset, MetricVector};
use crate::trainer::{TrainOutcome, TrainRequest, Trainer};

/// `score_m = base_m + Σ_s w_s (mean_pool(s) - c_s) + N(0, σ²)`, with the
/// noise fixed by the seed and the pool's content digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSignalSpec {
    pub base: BTreeMap<String, f64>,
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub centers: BTreeMap<String, f64>,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PlantedSignalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base.is_empty() {
            return Err(Error::Invalid("planted signal needs at least one metric".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Invalid(format!("noise scale must be finite and non-negative, got {}", self.sigma)));
        }
        let all = self.base.iter().chain(&self.weights).chain(&self.centers);
        if let Some((k, v)) = all.into_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!("planted signal value {k:?} is not finite ({v})")));
        }
        Ok(())
    }
}

/// Mean of each weighted stat over `ids`, summed in sorted-id order so the
/// result does not depend on pool order.
fn signal(ids: &[&String], dataset: &Dataset, spec: &PlantedSignalSpec) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::Invalid("cannot evaluate an empty pool".into()));
    }
    let mut total = 0.0;
    for (stat, w) in &spec.weights {
        let mut sum = 0.0;
        for id in ids {
            let s = dataset
                .get(id)
                .ok_or_else(|| Error::Invalid(format!("pool references unknown sample {id:?}")))?;
            sum += s.stat(stat)?;
        }
        let mean = sum / ids.len() as f64;
        total += w * (mean - spec.centers.get(stat).copied().unwrap_or(0.0));
    }
    Ok(total)
}

fn score(
    ids: &[&String],
    dataset: &Dataset,
    spec: &PlantedSignalSpec,
    noise_key: u64,
    trained: u64,
) -> Result<MetricVector> {
    spec.validate()?;
    let signal = signal(ids, dataset, spec)?;
    let mut metrics = BTreeMap::new();
    for (name, base) in &spec.base {
        let noise = if spec.sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise_key, name));
            Normal::new(0.0, spec.sigma)
                .expect("sigma validated")
                .sample(&mut rng)
        } else {
            0.0
        };
        metrics.insert(name.clone(), base + signal + noise);
    }
    MetricVector::new(metrics, trained, 0.0)
}

fn sorted_ids(pool: &DataPool) -> Vec<&String> {
    let mut ids: Vec<&String> = pool.sample_ids().iter().collect();
    ids.sort_unstable();
    ids
}

/// Deterministic in `(pool content, spec)`.
pub fn synthetic_train_eval(pool: &DataPool, dataset: &Dataset, spec: &PlantedSignalSpec) -> Result<MetricVector> {
    let key = ContentHasher::new()
        .field(spec.seed.to_le_bytes())
        .field(pool.content_digest())
        .finish_u64();
    score(&sorted_ids(pool), dataset, spec, key, pool.len() as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrainer {
    pub spec: PlantedSignalSpec,
}

impl SyntheticTrainer {
    pub fn new(spec: PlantedSignalSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    /// Non-empty hyperparameters and an incoming checkpoint both change the
    /// noise draw, so sweeps and iterations are distinguishable.
    fn noise_key(&self, request: &TrainRequest<'_>) -> Result<u64> {
        let mut h = ContentHasher::new();
        h.field(self.spec.seed.to_le_bytes()).field(request.pool.content_digest());
        if !request.hyperparams.is_empty() {
            h.json(request.hyperparams);
        }
        if let Some(ckpt) = request.checkpoint_in {
            h.field(file_digest(ckpt)?);
        }
        Ok(h.finish_u64())
    }
}

#[derive(Serialize)]
struct Checkpoint<'a> {
    trainer: &'a str,
    pool_digest: String,
    parent: Option<String>,
    metrics: &'a MetricVector,
}

impl Trainer for SyntheticTrainer {
    fn name(&self) -> &str {
        "synthetic"
    }

    /// An integer `epochs` hyperparameter scales the trained-sample count.
    fn train_eval(&self, request: &TrainRequest<'_>) -> Result<TrainOutcome> {
        let key = self.noise_key(request)?;
        let epochs = match request.hyperparams.get("epochs") {
            None => 1,
            Some(v) => v
                .as_u64()
                .filter(|e| *e >= 1)
                .ok_or_else(|| Error::Invalid(format!("epochs must be a positive integer, got {v}")))?,
        };
        let metrics = score(
            &sorted_ids(request.pool),
            request.dataset,
            &self.spec,
            key,
            request.pool.len() as u64 * epochs,
        )?;
        let parent = request.checkpoint_in.map(file_digest).transpose()?;
        let path = request.workdir.join("checkpoint.json");
        let body = Checkpoint {
            trainer: self.name(),
            pool_digest: request.pool.content_digest(),
            parent,
            metrics: &metrics,
        };
        let bytes = serde_json::to_vec_pretty(&body).expect("checkpoint serializes");
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(TrainOutcome {
            metrics,
            checkpoint_out: Some(path),
        })
    }

    /// Scores the first `fraction` of the pool in sorted-id order.
    fn partial_eval(&self, request: &TrainRequest<'_>, fraction: f64) -> Result<Option<MetricVector>> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Invalid(format!("checkpoint fraction must lie in (0, 1], got {fraction}")));
        }
        let ids = sorted_ids(request.pool);
        let take = ((ids.len() as f64 * fraction).ceil() as usize).clamp(1, ids.len().max(1));
        let ids = &ids[..take.min(ids.len())];
        let key = self.noise_key(request)?;
        score(ids, request.dataset, &self.spec, derive_seed(key, "partial"), take as u64).map(Some)
    }

    fn supports_checkpoints(&self) -> bool {
        true
    }
}
