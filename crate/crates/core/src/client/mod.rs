//! Pluggable vision-language inference: grounding, embeddings, binary
//! judgments and free-text completions.
//!
//! [`ModelClient`] owns the backend-independent contract (output parsing,
//! rescaling into original image space, judge-token mapping, embedding
//! dimension checks, request accounting). A [`Backend`] only moves text and
//! vectors: [`HttpBackend`] talks to a chat-completions style server,
//! [`MockBackend`] is a seeded pure function used by tests and examples.

mod http;
mod mock;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{parse_bbox, rescale_bbox, smart_resize, BBox, ImageDims, ResizeBounds};
use crate::record::GroundingRecord;

pub use http::HttpBackend;
pub use mock::{MockBackend, MockSettings};

/// Connection settings for one model binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "defaults::timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "defaults::max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "defaults::retry_limit")]
    pub retry_limit: u32,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "defaults::chat_path")]
    pub chat_path: String,
    #[serde(default = "defaults::embed_path")]
    pub embed_path: String,
    /// JSON pointer to the completion text in a chat response.
    #[serde(default = "defaults::text_pointer")]
    pub text_pointer: String,
    /// JSON pointer to the vector in an embedding response.
    #[serde(default = "defaults::embedding_pointer")]
    pub embedding_pointer: String,
    /// Base directory for relative image paths.
    #[serde(default)]
    pub image_root: Option<PathBuf>,
    #[serde(default)]
    pub resize: ResizeBounds,
    /// Label for how the backend pools hidden states (recorded, not used).
    #[serde(default)]
    pub pooling: Option<String>,
    #[serde(default)]
    pub prompts: PromptTemplates,
}

mod defaults {
    pub fn timeout_secs() -> f64 {
        60.0
    }
    pub fn max_in_flight() -> usize {
        8
    }
    pub fn retry_limit() -> u32 {
        3
    }
    pub fn chat_path() -> String {
        "/v1/chat/completions".into()
    }
    pub fn embed_path() -> String {
        "/v1/embeddings".into()
    }
    pub fn text_pointer() -> String {
        "/choices/0/message/content".into()
    }
    pub fn embedding_pointer() -> String {
        "/data/0/embedding".into()
    }
}

impl ClientConfig {
    /// Settings for an offline mock binding.
    pub fn mock(model: impl Into<String>) -> Self {
        Self {
            endpoint: "mock://".into(),
            model: model.into(),
            timeout_secs: defaults::timeout_secs(),
            max_in_flight: 4,
            retry_limit: defaults::retry_limit(),
            auth_env: None,
            chat_path: defaults::chat_path(),
            embed_path: defaults::embed_path(),
            text_pointer: defaults::text_pointer(),
            embedding_pointer: defaults::embedding_pointer(),
            image_root: None,
            resize: ResizeBounds::default(),
            pooling: None,
            prompts: PromptTemplates::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight < 1 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config("timeout_secs must be positive".into()));
        }
        if self.model.is_empty() {
            return Err(Error::Config("model id must not be empty".into()));
        }
        Ok(())
    }
}

/// Prompt templates; `{instruction}` and `{bbox}` are substituted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplates {
    pub ground: String,
    pub alignment: String,
    pub ambiguity: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            ground: "Locate the GUI element described by the instruction and output its \
                     bounding box as [x1,y1,x2,y2] in absolute pixel coordinates.\n\
                     Instruction: {instruction}"
                .into(),
            alignment: "Instruction: {instruction}\nBounding box: {bbox}\n\
                        Does the bounding box mark the GUI element the instruction refers to? \
                        Answer yes or no."
                .into(),
            ambiguity: "Instruction: {instruction}\nTarget element bounding box: {bbox}\n\
                        Does the instruction clearly point to this element, without any \
                        ambiguity about which element is meant? Answer yes or no."
                .into(),
        }
    }
}

impl PromptTemplates {
    pub fn render(template: &str, record: &GroundingRecord, bbox: Option<&BBox>) -> String {
        let mut s = template.replace("{instruction}", &record.instruction);
        if let Some(b) = bbox {
            s = s.replace("{bbox}", &b.to_string());
        }
        s
    }
}

/// A model's answer for one record, in original image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundResult {
    pub raw_output: String,
    pub parsed_box: Option<BBox>,
    pub model_dims: ImageDims,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    Alignment,
    Ambiguity,
}

impl JudgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JudgeKind::Alignment => "alignment",
            JudgeKind::Ambiguity => "ambiguity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Positive,
    Negative,
}

/// Encoded image bytes plus MIME type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePayload {
    pub mime: String,
    pub bytes: Vec<u8>,
}

impl ImagePayload {
    pub fn png(bytes: Vec<u8>) -> Self {
        Self {
            mime: "image/png".into(),
            bytes,
        }
    }
}

/// What a backend must provide. All methods are blocking and thread-safe.
pub trait Backend: Send + Sync {
    /// Raw text for a grounding request at the given model-input size.
    fn ground_raw(
        &self,
        record: &GroundingRecord,
        model_dims: ImageDims,
        prompt: &str,
    ) -> Result<String>;

    fn embed_raw(&self, record: &GroundingRecord) -> Result<Vec<f64>>;

    fn judge_raw(
        &self,
        kind: JudgeKind,
        record: &GroundingRecord,
        bbox: &BBox,
        prompt: &str,
    ) -> Result<String>;

    fn complete_raw(&self, prompt: &str, image: Option<&ImagePayload>) -> Result<String>;
}

/// Thread-safe handle bound to one model.
#[derive(Clone)]
pub struct ModelClient {
    inner: Arc<Inner>,
}

struct Inner {
    config: ClientConfig,
    backend: Box<dyn Backend>,
    requests: AtomicU64,
    embed_dim: OnceLock<usize>,
}

impl std::fmt::Debug for ModelClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelClient")
            .field("model", &self.inner.config.model)
            .field("endpoint", &self.inner.config.endpoint)
            .field("requests", &self.requests())
            .finish()
    }
}

impl ModelClient {
    pub fn new(config: ClientConfig, backend: impl Backend + 'static) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                backend: Box::new(backend),
                requests: AtomicU64::new(0),
                embed_dim: OnceLock::new(),
            }),
        })
    }

    /// HTTP client for `config`.
    pub fn http(config: ClientConfig) -> Result<Self> {
        let backend = HttpBackend::new(&config)?;
        Self::new(config, backend)
    }

    /// Seeded offline client.
    pub fn mock(config: ClientConfig, settings: MockSettings) -> Result<Self> {
        let backend = MockBackend::new(settings);
        Self::new(config, backend)
    }

    pub fn config(&self) -> &ClientConfig {
        &self.inner.config
    }

    pub fn model_id(&self) -> &str {
        &self.inner.config.model
    }

    /// Number of backend calls issued so far.
    pub fn requests(&self) -> u64 {
        self.inner.requests.load(Ordering::Relaxed)
    }

    fn count(&self) {
        self.inner.requests.fetch_add(1, Ordering::Relaxed);
    }

    /// Zero-shot grounding; the parsed box is mapped back to `record.dims`.
    pub fn ground(&self, record: &GroundingRecord) -> Result<GroundResult> {
        let model_dims = smart_resize(record.dims, self.inner.config.resize)?.dims;
        let prompt = PromptTemplates::render(&self.inner.config.prompts.ground, record, None);
        self.count();
        let raw = self.inner.backend.ground_raw(record, model_dims, &prompt)?;
        let parsed_box =
            parse_bbox(&raw).and_then(|b| rescale_bbox(&b, model_dims, record.dims).ok());
        Ok(GroundResult {
            raw_output: raw,
            parsed_box,
            model_dims,
        })
    }

    /// Latent vector for a record; every call in a run must agree on length.
    pub fn embed(&self, record: &GroundingRecord) -> Result<EmbeddingVector> {
        self.count();
        let values = self.inner.backend.embed_raw(record)?;
        if values.is_empty() {
            return Err(Error::Consistency(format!(
                "empty embedding for {}",
                record.id
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Consistency(format!(
                "non-finite embedding entry {i} for {}",
                record.id
            )));
        }
        let expected = *self.inner.embed_dim.get_or_init(|| values.len());
        if values.len() != expected {
            return Err(Error::Consistency(format!(
                "embedding for {} has dim {}, run started with {expected}",
                record.id,
                values.len()
            )));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn binary_judge(
        &self,
        kind: JudgeKind,
        record: &GroundingRecord,
        bbox: &BBox,
    ) -> Result<Verdict> {
        let prompts = &self.inner.config.prompts;
        let template = match kind {
            JudgeKind::Alignment => &prompts.alignment,
            JudgeKind::Ambiguity => &prompts.ambiguity,
        };
        let prompt = PromptTemplates::render(template, record, Some(bbox));
        self.count();
        let raw = self.inner.backend.judge_raw(kind, record, bbox, &prompt)?;
        parse_verdict(&raw)
    }

    pub fn complete(&self, prompt: &str, image: Option<&ImagePayload>) -> Result<String> {
        if prompt.trim().is_empty() {
            return Err(Error::input("empty prompt"));
        }
        self.count();
        self.inner.backend.complete_raw(prompt, image)
    }

    /// Applies `f` to every item with at most `max_in_flight` calls running
    /// at once. Results come back in input order.
    pub fn fan_out<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        fan_out(items, self.inner.config.max_in_flight, f)
    }
}

/// Order-preserving bounded parallel map.
pub fn fan_out<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let chunks: Vec<Vec<(usize, R)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break;
                        }
                        done.push((i, f(&items[i])));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fan_out worker panicked"))
            .collect()
    });
    for (i, r) in chunks.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots
        .into_iter()
        .map(|r| r.expect("every index is processed exactly once"))
        .collect()
}

/// Joins a relative image reference onto `root`; absolute references and a
/// missing root leave it unchanged.
pub fn resolve_image_path(root: Option<&Path>, image_ref: &str) -> PathBuf {
    let p = Path::new(image_ref);
    match root {
        Some(root) if p.is_relative() => root.join(p),
        _ => p.to_path_buf(),
    }
}

/// MIME type from the file extension, PNG when unknown.
pub fn mime_for_path(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "image/png",
    }
}

/// Maps a judge response to a verdict by its first word.
pub fn parse_verdict(raw: &str) -> Result<Verdict> {
    let word: String = raw
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    match word.as_str() {
        "yes" => Ok(Verdict::Positive),
        "no" => Ok(Verdict::Negative),
        _ => Err(Error::JudgeParse {
            raw: raw.to_string(),
        }),
    }
}

/// Runs `op` up to `retry_limit + 1` times while it fails with a retryable
/// error. Returns the final result and the number of attempts made.
pub fn with_retries<T>(
    retry_limit: u32,
    mut op: impl FnMut(u32) -> std::result::Result<T, Attempt>,
) -> (std::result::Result<T, String>, u32) {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match op(attempt) {
            Ok(v) => return (Ok(v), attempt),
            Err(Attempt::Fatal(msg)) => return (Err(msg), attempt),
            Err(Attempt::Retry(msg)) => {
                if attempt > retry_limit {
                    return (Err(msg), attempt);
                }
                // linear backoff, capped
                let wait = std::time::Duration::from_millis(50 * attempt.min(10) as u64);
                std::thread::sleep(wait);
            }
        }
    }
}

/// Failure classification for [`with_retries`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attempt {
    Retry(String),
    Fatal(String),
}
