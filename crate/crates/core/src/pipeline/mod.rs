//! Staged curation runs with manifests, resumability and final assembly.
//!
//! A run executes `ingest`, the configured filtering stages (by default
//! downsample, difficulty, alignment, diversity, ambiguity), then `review`,
//! which publishes the survivors for manual verification, and optionally
//! `traces`. Every stage writes a JSONL output and a manifest row. A stage
//! is reused on a later run when its config digest (stage settings chained
//! on the upstream content digest) matches and its output file still hashes
//! to the recorded content digest.

mod config;
mod manifest;
mod review;
pub mod server;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use chrono::Utc;
use rand::seq::index;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::client::{JudgeKind, ModelClient, Verdict};
use crate::difficulty::{partition_by_difficulty, PredictionCache};
use crate::digest::{config_digest, hash_parts, keyed_rng, rows_digest};
use crate::diversity::{select_diverse, EmbeddingMatrix, EmbeddingRow};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::ranker::build_training_triplets;
use crate::record::{ensure_unique_ids, GroundingRecord};
use crate::trace::{generate_traces, TraceRow};

pub use config::{
    BindingKind, ClientBinding, Clients, PipelineConfig, Seeds, SourceSpec, StageName,
    TraceSettings,
};
pub use manifest::{PipelineManifest, RunStatus, StageRecord};
pub use review::{
    assemble_final, effective_decisions, load_decisions, FinalAssembly, FinalRecord,
    ReviewDecision, ReviewVerdict,
};

/// File locations inside a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join(PipelineManifest::FILE)
    }
    pub fn stages_dir(&self) -> PathBuf {
        self.root.join("stages")
    }
    pub fn prediction_cache(&self) -> PathBuf {
        self.root.join("cache").join("predictions.jsonl")
    }
    pub fn response_cache(&self) -> PathBuf {
        self.root.join("cache").join("responses.jsonl")
    }
    pub fn survivors(&self) -> PathBuf {
        self.root.join("review").join("survivors.jsonl")
    }
    pub fn decisions(&self) -> PathBuf {
        self.root.join("review").join("decisions.jsonl")
    }
    pub fn traces(&self) -> PathBuf {
        self.root.join("traces.jsonl")
    }
    pub fn final_dataset(&self) -> PathBuf {
        self.root.join("final").join("dataset.jsonl")
    }
    pub fn final_report(&self) -> PathBuf {
        self.root.join("final").join("assembly.json")
    }
}

/// Uniform sample of `round(fraction * n)` records without replacement,
/// returned in id order.
pub fn downsample(
    records: &[GroundingRecord],
    fraction: f64,
    seed: u64,
) -> Result<Vec<GroundingRecord>> {
    if records.is_empty() {
        return Err(Error::input("cannot downsample an empty record set"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::input(format!(
            "downsample fraction {fraction} outside (0, 1]"
        )));
    }
    let mut sorted: Vec<&GroundingRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let n = sorted.len();
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = keyed_rng(seed, &[b"downsample"]);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| sorted[i].clone()).collect())
}

/// Row types a stage can emit.
trait StageRow: Serialize + DeserializeOwned {
    fn row_id(&self) -> &str;
}

impl StageRow for GroundingRecord {
    fn row_id(&self) -> &str {
        &self.id
    }
}

impl StageRow for TraceRow {
    fn row_id(&self) -> &str {
        &self.id
    }
}

struct StageRun<T> {
    rows: Vec<T>,
    deferred: usize,
    errors: usize,
}

impl<T> StageRun<T> {
    fn clean(rows: Vec<T>) -> Self {
        Self {
            rows,
            deferred: 0,
            errors: 0,
        }
    }
}

/// Model responses keyed by `(model, kind, record id)`.
#[derive(Debug, Default)]
struct ResponseCache {
    entries: BTreeMap<(String, String, String), Value>,
}

#[derive(Serialize, Deserialize)]
struct CacheRow {
    model: String,
    kind: String,
    id: String,
    value: Value,
}

impl ResponseCache {
    fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let rows: Vec<CacheRow> = jsonl::read(path)?;
        Ok(Self {
            entries: rows
                .into_iter()
                .map(|r| ((r.model, r.kind, r.id), r.value))
                .collect(),
        })
    }

    fn save(&self, path: &Path) -> Result<()> {
        let rows: Vec<CacheRow> = self
            .entries
            .iter()
            .map(|((model, kind, id), value)| CacheRow {
                model: model.clone(),
                kind: kind.clone(),
                id: id.clone(),
                value: value.clone(),
            })
            .collect();
        jsonl::write(path, &rows)
    }

    fn get(&self, model: &str, kind: &str, id: &str) -> Option<&Value> {
        self.entries
            .get(&(model.to_string(), kind.to_string(), id.to_string()))
    }

    fn insert(&mut self, model: &str, kind: &str, id: &str, value: Value) {
        self.entries
            .insert((model.to_string(), kind.to_string(), id.to_string()), value);
    }
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    layout: RunLayout,
    previous: Option<PipelineManifest>,
    manifest: PipelineManifest,
    /// Record id to index of the source it came from.
    origin: HashMap<String, usize>,
    grounder: ModelClient,
    embedder: ModelClient,
    ranker: ModelClient,
    judge: ModelClient,
    tracer: Option<ModelClient>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a PipelineConfig) -> Result<Self> {
        let layout = RunLayout::new(&cfg.output_dir);
        let previous = match layout.manifest() {
            p if p.exists() => Some(PipelineManifest::load(p)?),
            _ => None,
        };
        let root = cfg.image_root.as_deref();
        let seed = cfg.seeds.mock;
        let c = &cfg.clients;
        Ok(Self {
            cfg,
            layout,
            previous,
            manifest: PipelineManifest {
                run_config_digest: config_digest(cfg),
                stages: Vec::new(),
                status: RunStatus::Complete,
            },
            origin: HashMap::new(),
            grounder: c.grounder.build("grounder", seed, root)?,
            embedder: c.embedder.build("embedder", seed, root)?,
            ranker: c.ranker.build("ranker", seed, root)?,
            judge: c.judge.build("judge", seed, root)?,
            tracer: c
                .tracer
                .as_ref()
                .map(|t| t.build("tracer", seed, root))
                .transpose()?,
        })
    }

    fn requests(&self) -> u64 {
        [&self.grounder, &self.embedder, &self.ranker, &self.judge]
            .into_iter()
            .chain(self.tracer.as_ref())
            .map(ModelClient::requests)
            .sum()
    }

    fn upstream_digest(&self) -> String {
        self.manifest
            .stages
            .last()
            .map(|s| s.content_digest.clone())
            .unwrap_or_default()
    }

    /// Digest describing a client binding as it affects outputs.
    fn binding_params(&self, role: &str, binding: &ClientBinding) -> Value {
        let client = binding.effective_client(role);
        json!({
            "kind": binding.kind,
            "client": client,
            "mock": match binding.kind {
                BindingKind::Mock => serde_json::to_value(&binding.mock).expect("settings serialize"),
                BindingKind::Http => Value::Null,
            },
            "mock_seed": self.cfg.seeds.mock,
        })
    }

    /// Runs or reuses one stage and records it in the manifest.
    fn step<T: StageRow>(
        &mut self,
        name: &str,
        rel_output: &str,
        params: Value,
        input: &[GroundingRecord],
        exec: impl FnOnce(&mut Self, &[GroundingRecord]) -> Result<StageRun<T>>,
    ) -> Result<Vec<T>> {
        let started_at = Utc::now();
        let digest = config_digest(&json!({
            "stage": name,
            "params": params,
            "upstream": self.upstream_digest(),
        }));
        let out_path = self.layout.root.join(rel_output);

        if let Some(prev) = self.previous.as_ref().and_then(|m| m.stage(name)) {
            if prev.config_digest == digest && out_path.is_file() {
                let rows: Vec<T> = jsonl::read(&out_path)?;
                if rows_digest(&rows, |r| r.row_id()) == prev.content_digest {
                    let mut rec = prev.clone();
                    rec.started_at = started_at;
                    rec.finished_at = Utc::now();
                    rec.requests = 0;
                    rec.reused = true;
                    tracing::info!(stage = name, rows = rows.len(), "reusing stage output");
                    self.manifest.stages.push(rec);
                    return Ok(rows);
                }
                tracing::warn!(stage = name, "stage output changed on disk; recomputing");
            }
        }

        let before = self.requests();
        let run = exec(self, input)?;
        let ids: BTreeSet<&str> = input.iter().map(|r| r.id.as_str()).collect();
        if let Some(bad) = run.rows.iter().find(|r| !ids.contains(r.row_id())) {
            return Err(Error::Consistency(format!(
                "stage {name} emitted {} which is not in its input",
                bad.row_id()
            )));
        }
        jsonl::write(&out_path, &run.rows)?;
        let rec = StageRecord {
            name: name.to_string(),
            input_count: input.len(),
            output_count: run.rows.len(),
            config_digest: digest,
            content_digest: rows_digest(&run.rows, |r| r.row_id()),
            output: rel_output.to_string(),
            started_at,
            finished_at: Utc::now(),
            deferred: run.deferred,
            errors: run.errors,
            requests: self.requests() - before,
            reused: false,
        };
        tracing::info!(
            stage = name,
            input = rec.input_count,
            output = rec.output_count,
            deferred = rec.deferred,
            "stage complete"
        );
        self.manifest.stages.push(rec);
        self.manifest.save(self.layout.manifest())?;
        Ok(run.rows)
    }

    fn load_sources(&mut self) -> Result<(Vec<GroundingRecord>, Value)> {
        let mut all = Vec::new();
        let mut params = Vec::new();
        for (i, spec) in self.cfg.sources.iter().enumerate() {
            let bytes = std::fs::read(&spec.path).map_err(|e| Error::io(&spec.path, e))?;
            params.push(json!({"name": spec.name, "sha256": hash_parts(&[&bytes])}));
            let records: Vec<GroundingRecord> = jsonl::read(&spec.path)?;
            for r in &records {
                r.validate()?;
                self.origin.insert(r.id.clone(), i);
            }
            all.extend(records);
        }
        ensure_unique_ids(&all)?;
        all.sort_by(|a, b| a.id.cmp(&b.id));
        Ok((all, Value::Array(params)))
    }

    fn source_of(&self, r: &GroundingRecord) -> &SourceSpec {
        &self.cfg.sources[self.origin[&r.id]]
    }

    fn run(&mut self) -> Result<()> {
        let (records, params) = self.load_sources()?;
        let mut current = self.step(
            "ingest",
            "stages/00_ingest.jsonl",
            params,
            &records,
            |_, input| Ok(StageRun::clean(input.to_vec())),
        )?;

        for (i, stage) in self.cfg.stage_order.clone().into_iter().enumerate() {
            let rel = format!("stages/{:02}_{}.jsonl", i + 1, stage.as_str());
            current = match stage {
                StageName::Downsample => self.downsample_stage(&rel, &current)?,
                StageName::Difficulty => self.difficulty_stage(&rel, &current)?,
                StageName::Alignment => self.judge_stage(JudgeKind::Alignment, &rel, &current)?,
                StageName::Diversity => self.diversity_stage(&rel, &current)?,
                StageName::Ambiguity => self.judge_stage(JudgeKind::Ambiguity, &rel, &current)?,
                other => unreachable!("validated stage order contains {other:?}"),
            };
        }

        current = self.step(
            "review",
            "review/survivors.jsonl",
            json!({}),
            &current,
            |_, input| Ok(StageRun::clean(input.to_vec())),
        )?;

        if self.cfg.traces.enabled {
            self.trace_stage(&current)?;
        }
        Ok(())
    }

    fn downsample_stage(
        &mut self,
        rel: &str,
        input: &[GroundingRecord],
    ) -> Result<Vec<GroundingRecord>> {
        let fractions: Vec<Value> = self
            .cfg
            .sources
            .iter()
            .map(|s| json!({"name": s.name, "fraction": s.downsample}))
            .collect();
        let params = json!({"fractions": fractions, "seed": self.cfg.seeds.downsample});
        self.step("downsample", rel, params, input, |me, input| {
            let mut groups: BTreeMap<usize, Vec<GroundingRecord>> = BTreeMap::new();
            for r in input {
                groups.entry(me.origin[&r.id]).or_default().push(r.clone());
            }
            let mut out = Vec::with_capacity(input.len());
            for (i, group) in groups {
                let spec = &me.cfg.sources[i];
                match spec.downsample {
                    Some(f) => {
                        let seed = me.cfg.seeds.downsample;
                        let mut rng_key = keyed_rng(seed, &[spec.name.as_bytes()]);
                        let sub_seed = rand::Rng::random::<u64>(&mut rng_key);
                        out.extend(downsample(&group, f, sub_seed)?);
                    }
                    None => out.extend(group),
                }
            }
            out.sort_by(|a, b| a.id.cmp(&b.id));
            Ok(StageRun::clean(out))
        })
    }

    fn difficulty_stage(
        &mut self,
        rel: &str,
        input: &[GroundingRecord],
    ) -> Result<Vec<GroundingRecord>> {
        let params = json!({
            "grounder": self.binding_params("grounder", &self.cfg.clients.grounder),
            "eligibility": self.cfg.eligibility,
            "ranker_seed": self.cfg.seeds.ranker,
        });
        self.step("difficulty", rel, params, input, |me, input| {
            let cache_path = me.layout.prediction_cache();
            let mut cache = PredictionCache::load(&cache_path)?;
            let partition = partition_by_difficulty(input, &me.grounder, &mut cache)?;
            cache.save(&cache_path)?;
            let side = me.layout.stages_dir();
            jsonl::write(side.join("difficulty_outcomes.jsonl"), &partition.outcomes)?;
            jsonl::write(side.join("difficulty_deferred.jsonl"), &partition.deferred)?;
            let (triplets, stats) = build_training_triplets(
                &partition.easy,
                &partition.outcomes,
                &me.cfg.eligibility,
                me.cfg.seeds.ranker,
            )?;
            jsonl::write(side.join("ranker_train.jsonl"), &triplets)?;
            write_json(&side.join("ranker_train_stats.json"), &stats)?;
            Ok(StageRun {
                deferred: partition.deferred.len(),
                errors: 0,
                rows: partition.hard,
            })
        })
    }

    fn judge_stage(
        &mut self,
        kind: JudgeKind,
        rel: &str,
        input: &[GroundingRecord],
    ) -> Result<Vec<GroundingRecord>> {
        let (role, binding) = match kind {
            JudgeKind::Alignment => ("ranker", &self.cfg.clients.ranker),
            JudgeKind::Ambiguity => ("judge", &self.cfg.clients.judge),
        };
        let params = json!({ "client": self.binding_params(role, binding) });
        let name = match kind {
            JudgeKind::Alignment => "alignment",
            JudgeKind::Ambiguity => "ambiguity",
        };
        self.step(name, rel, params, input, |me, input| {
            let client = match kind {
                JudgeKind::Alignment => me.ranker.clone(),
                JudgeKind::Ambiguity => me.judge.clone(),
            };
            let cache_path = me.layout.response_cache();
            let mut cache = ResponseCache::load(&cache_path)?;
            let model = client.model_id().to_string();
            let todo: Vec<&GroundingRecord> = input
                .iter()
                .filter(|r| cache.get(&model, kind.as_str(), &r.id).is_none())
                .collect();
            let fresh = client.fan_out(&todo, |r| client.binary_judge(kind, r, &r.gt_box));
            let mut failed: HashMap<&str, Error> = HashMap::new();
            for (r, res) in todo.iter().zip(fresh) {
                match res {
                    Ok(v) => cache.insert(&model, kind.as_str(), &r.id, json!(v)),
                    Err(e @ (Error::Input(_) | Error::Consistency(_))) => return Err(e),
                    Err(e) => {
                        failed.insert(r.id.as_str(), e);
                    }
                }
            }
            cache.save(&cache_path)?;
            let (mut deferred, mut errors) = (0, 0);
            let mut kept = Vec::new();
            for r in input {
                if let Some(e) = failed.get(r.id.as_str()) {
                    match e {
                        Error::JudgeParse { .. } => errors += 1,
                        _ => deferred += 1,
                    }
                    continue;
                }
                let v: Verdict = serde_json::from_value(
                    cache
                        .get(&model, kind.as_str(), &r.id)
                        .cloned()
                        .unwrap_or(Value::Null),
                )
                .map_err(|e| Error::Consistency(format!("bad cached verdict for {}: {e}", r.id)))?;
                if v == Verdict::Positive {
                    kept.push(r.clone());
                }
            }
            Ok(StageRun {
                rows: kept,
                deferred,
                errors,
            })
        })
    }

    fn diversity_stage(
        &mut self,
        rel: &str,
        input: &[GroundingRecord],
    ) -> Result<Vec<GroundingRecord>> {
        let flags: Vec<Value> = self
            .cfg
            .sources
            .iter()
            .map(|s| json!({"name": s.name, "cluster": s.cluster}))
            .collect();
        let params = json!({
            "embedder": self.binding_params("embedder", &self.cfg.clients.embedder),
            "diversity": self.cfg.diversity,
            "seed": self.cfg.seeds.clustering,
            "flags": flags,
        });
        self.step("diversity", rel, params, input, |me, input| {
            let (flagged, passthrough): (Vec<GroundingRecord>, Vec<GroundingRecord>) =
                input.iter().cloned().partition(|r| me.source_of(r).cluster);

            let cache_path = me.layout.response_cache();
            let mut cache = ResponseCache::load(&cache_path)?;
            let client = me.embedder.clone();
            let model = client.model_id().to_string();
            let todo: Vec<&GroundingRecord> = flagged
                .iter()
                .filter(|r| cache.get(&model, "embed", &r.id).is_none())
                .collect();
            let fresh = client.fan_out(&todo, |r| client.embed(r));
            let mut deferred = BTreeSet::new();
            for (r, res) in todo.iter().zip(fresh) {
                match res {
                    Ok(v) => cache.insert(&model, "embed", &r.id, json!(v.values)),
                    Err(e @ (Error::Input(_) | Error::Consistency(_))) => return Err(e),
                    Err(_) => {
                        deferred.insert(r.id.clone());
                    }
                }
            }
            cache.save(&cache_path)?;

            let ready: Vec<GroundingRecord> = flagged
                .into_iter()
                .filter(|r| !deferred.contains(&r.id))
                .collect();
            let rows: Vec<EmbeddingRow> = ready
                .iter()
                .map(|r| {
                    let vector: Vec<f64> = serde_json::from_value(
                        cache
                            .get(&model, "embed", &r.id)
                            .cloned()
                            .unwrap_or(Value::Null),
                    )
                    .map_err(|e| {
                        Error::Consistency(format!("bad cached embedding for {}: {e}", r.id))
                    })?;
                    Ok(EmbeddingRow {
                        id: r.id.clone(),
                        vector,
                    })
                })
                .collect::<Result<_>>()?;
            let mut out = passthrough;
            if !ready.is_empty() {
                let matrix = EmbeddingMatrix::from_rows(rows)?;
                let (selected, report) =
                    select_diverse(&ready, &matrix, &me.cfg.diversity, me.cfg.seeds.clustering)?;
                write_json(
                    &me.layout.stages_dir().join("diversity_report.json"),
                    &report,
                )?;
                out.extend(selected);
            }
            out.sort_by(|a, b| a.id.cmp(&b.id));
            Ok(StageRun {
                rows: out,
                deferred: deferred.len(),
                errors: 0,
            })
        })
    }

    fn trace_stage(&mut self, survivors: &[GroundingRecord]) -> Result<()> {
        let binding = self
            .cfg
            .clients
            .tracer
            .as_ref()
            .ok_or_else(|| Error::Config("traces need clients.tracer".into()))?;
        let params = json!({
            "tracer": self.binding_params("tracer", binding),
            "traces": self.cfg.traces,
            "prompt": crate::trace::PROMPT_VERSION,
        });
        self.step("traces", "traces.jsonl", params, survivors, |me, input| {
            let client = me.tracer.clone().expect("tracer built when configured");
            let (rows, deferred) = generate_traces(
                input,
                &client,
                me.cfg.image_root.as_deref(),
                me.cfg.traces.style,
                &me.cfg.traces.check,
            )?;
            let errors = deferred
                .iter()
                .filter(|d| d.error.starts_with("trace response"))
                .count();
            Ok(StageRun {
                rows,
                deferred: deferred.len() - errors,
                errors,
            })
        })?;
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs every stage, reusing outputs whose digests still match. On failure
/// the manifest records the completed stages and the failing one.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineManifest> {
    cfg.validate()?;
    let mut runner = Runner::new(cfg)?;
    std::fs::create_dir_all(&runner.layout.root).map_err(|e| Error::io(&runner.layout.root, e))?;
    let result = runner.run();
    if let Err(e) = &result {
        let done = runner.manifest.stages.len();
        let stage = ["ingest"]
            .into_iter()
            .chain(cfg.stage_order.iter().map(|s| s.as_str()))
            .chain(["review", "traces"])
            .nth(done)
            .unwrap_or("unknown");
        runner.manifest.status = RunStatus::Failed {
            stage: stage.to_string(),
            error: e.to_string(),
        };
    }
    runner.manifest.save(runner.layout.manifest())?;
    result.map(|()| runner.manifest)
}

/// Reads a run directory's survivors, decision log and traces, assembles
/// the final dataset and writes it under `final/`.
pub fn assemble_run(output_dir: impl AsRef<Path>) -> Result<FinalAssembly> {
    let layout = RunLayout::new(output_dir.as_ref());
    let survivors_path = layout.survivors();
    if !survivors_path.is_file() {
        return Err(Error::input(format!(
            "no review stage output at {}",
            survivors_path.display()
        )));
    }
    let survivors: Vec<GroundingRecord> = jsonl::read(&survivors_path)?;
    let decisions = load_decisions(layout.decisions())?;
    let traces: Option<Vec<TraceRow>> = match layout.traces() {
        p if p.is_file() => Some(jsonl::read(p)?),
        _ => None,
    };
    let assembly = assemble_final(&survivors, &decisions, traces.as_deref());
    for id in &assembly.unknown {
        tracing::warn!(id = id.as_str(), "decision for unknown record ignored");
    }
    jsonl::write(layout.final_dataset(), &assembly.records)?;
    write_json(
        &layout.final_report(),
        &json!({
            "final": assembly.records.len(),
            "rejected": assembly.rejected,
            "pending": assembly.pending,
            "unknown": assembly.unknown,
        }),
    )?;
    Ok(assembly)
}
