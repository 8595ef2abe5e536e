//! Easy/hard partition by zero-shot center-hit correctness.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::client::{GroundResult, ModelClient};
use crate::error::{Error, Result};
use crate::geometry::{center_hit, BBox, ImageDims};
use crate::jsonl;
use crate::record::GroundingRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyOutcome {
    pub id: String,
    pub prediction: GroundResult,
    pub label: Difficulty,
}

impl DifficultyOutcome {
    pub fn classify(record: &GroundingRecord, prediction: GroundResult) -> Self {
        let label = match &prediction.parsed_box {
            Some(b) if center_hit(b, &record.gt_box) => Difficulty::Easy,
            _ => Difficulty::Hard,
        };
        Self {
            id: record.id.clone(),
            prediction,
            label,
        }
    }
}

/// A record whose request failed after retries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deferred {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct DifficultyPartition {
    pub easy: Vec<GroundingRecord>,
    pub hard: Vec<GroundingRecord>,
    /// One entry per non-deferred record, ordered by id.
    pub outcomes: Vec<DifficultyOutcome>,
    pub deferred: Vec<Deferred>,
}

/// Grounding predictions keyed by `(model, record id)`, persisted as JSONL.
#[derive(Debug, Clone, Default)]
pub struct PredictionCache {
    entries: HashMap<(String, String), GroundResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRow {
    model: String,
    id: String,
    raw_output: String,
    bbox: Option<BBox>,
    model_width: u32,
    model_height: u32,
}

impl PredictionCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a cache file; a missing file yields an empty cache.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Ok(Self::new());
        }
        let rows: Vec<CacheRow> = jsonl::read(path)?;
        let mut cache = Self::new();
        for r in rows {
            let result = GroundResult {
                raw_output: r.raw_output,
                parsed_box: r.bbox,
                model_dims: ImageDims::new(r.model_width, r.model_height)?,
            };
            cache.insert(&r.model, &r.id, result);
        }
        Ok(cache)
    }

    /// Writes all entries sorted by `(model, id)`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut keys: Vec<_> = self.entries.keys().collect();
        keys.sort();
        let rows: Vec<CacheRow> = keys
            .into_iter()
            .map(|k| {
                let g = &self.entries[k];
                CacheRow {
                    model: k.0.clone(),
                    id: k.1.clone(),
                    raw_output: g.raw_output.clone(),
                    bbox: g.parsed_box,
                    model_width: g.model_dims.width,
                    model_height: g.model_dims.height,
                }
            })
            .collect();
        jsonl::write(path, &rows)
    }

    pub fn get(&self, model: &str, id: &str) -> Option<&GroundResult> {
        self.entries.get(&(model.to_string(), id.to_string()))
    }

    pub fn insert(&mut self, model: &str, id: &str, result: GroundResult) {
        self.entries
            .insert((model.to_string(), id.to_string()), result);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Splits records into easy (zero-shot center hit) and hard (miss or no
/// parseable box). Cached predictions are reused; fresh ones are added to
/// the cache. Records whose request fails are deferred, not labeled.
pub fn partition_by_difficulty(
    records: &[GroundingRecord],
    client: &ModelClient,
    cache: &mut PredictionCache,
) -> Result<DifficultyPartition> {
    let mut sorted: Vec<&GroundingRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if sorted.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::input("duplicate record ids in difficulty input"));
    }
    for r in &sorted {
        r.validate()?;
    }

    let model = client.model_id().to_string();
    let missing: Vec<&GroundingRecord> = sorted
        .iter()
        .copied()
        .filter(|r| cache.get(&model, &r.id).is_none())
        .collect();
    let fresh = client.fan_out(&missing, |r| client.ground(r));

    let mut failures: HashMap<&str, String> = HashMap::new();
    for (r, res) in missing.iter().zip(fresh) {
        match res {
            Ok(g) => cache.insert(&model, &r.id, g),
            Err(e @ Error::Input(_)) => return Err(e),
            Err(e) => {
                failures.insert(r.id.as_str(), e.to_string());
            }
        }
    }

    let mut out = DifficultyPartition::default();
    for r in sorted {
        if let Some(err) = failures.remove(r.id.as_str()) {
            out.deferred.push(Deferred {
                id: r.id.clone(),
                error: err,
            });
            continue;
        }
        let prediction = cache
            .get(&model, &r.id)
            .cloned()
            .expect("every non-failed record has a cached prediction");
        let outcome = DifficultyOutcome::classify(r, prediction);
        match outcome.label {
            Difficulty::Easy => out.easy.push(r.clone()),
            Difficulty::Hard => out.hard.push(r.clone()),
        }
        out.outcomes.push(outcome);
    }
    Ok(out)
}
