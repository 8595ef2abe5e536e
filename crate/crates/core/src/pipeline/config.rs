use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::client::{ClientConfig, MockSettings, ModelClient};
use crate::digest::keyed_unit;
use crate::diversity::DiversityConfig;
use crate::error::{Error, Result};
use crate::ranker::EligibilityRule;
use crate::reward::RewardConfig;
use crate::trace::{OverlayStyle, TraceCheck};

/// One input dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Label used in manifests and for seeding the downsampler.
    pub name: String,
    /// GroundingRecord JSONL.
    pub path: PathBuf,
    /// Fraction kept by the downsample stage; absent keeps everything.
    #[serde(default)]
    pub downsample: Option<f64>,
    /// Whether this source goes through diversity selection. Unflagged
    /// sources pass that stage unchanged.
    #[serde(default = "yes")]
    pub cluster: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BindingKind {
    Mock,
    Http,
}

/// Which backend a pipeline role talks to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientBinding {
    pub kind: BindingKind,
    /// Connection settings; a mock binding may omit them.
    #[serde(default)]
    pub client: Option<ClientConfig>,
    /// Mock knobs. The mock seed is derived from `seeds.mock` and the role.
    #[serde(default, skip_serializing_if = "is_default_mock")]
    pub mock: MockSettings,
}

fn is_default_mock(m: &MockSettings) -> bool {
    *m == MockSettings::default()
}

impl ClientBinding {
    pub fn mock() -> Self {
        Self {
            kind: BindingKind::Mock,
            client: None,
            mock: MockSettings::default(),
        }
    }

    /// Client settings as they will be used (mock default when absent).
    pub fn effective_client(&self, role: &str) -> ClientConfig {
        self.client
            .clone()
            .unwrap_or_else(|| ClientConfig::mock(format!("mock-{role}")))
    }

    pub fn build(
        &self,
        role: &str,
        mock_seed: u64,
        image_root: Option<&Path>,
    ) -> Result<ModelClient> {
        let mut cfg = self.effective_client(role);
        if cfg.image_root.is_none() {
            cfg.image_root = image_root.map(Path::to_path_buf);
        }
        match self.kind {
            BindingKind::Mock => {
                let mut settings = self.mock.clone();
                settings.seed = role_seed(mock_seed, role);
                ModelClient::mock(cfg, settings)
            }
            BindingKind::Http => ModelClient::http(cfg),
        }
    }
}

fn role_seed(seed: u64, role: &str) -> u64 {
    (keyed_unit(seed, &[b"role", role.as_bytes()]) * (1u64 << 53) as f64) as u64
}

/// Client bindings per model role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clients {
    /// Zero-shot grounding for the difficulty partition.
    pub grounder: ClientBinding,
    /// Embeddings for diversity selection.
    pub embedder: ClientBinding,
    /// Alignment judge.
    pub ranker: ClientBinding,
    /// Ambiguity judge.
    pub judge: ClientBinding,
    /// Trace generator; required only when traces are enabled.
    #[serde(default)]
    pub tracer: Option<ClientBinding>,
}

impl Clients {
    pub fn all_mock() -> Self {
        Self {
            grounder: ClientBinding::mock(),
            embedder: ClientBinding::mock(),
            ranker: ClientBinding::mock(),
            judge: ClientBinding::mock(),
            tracer: Some(ClientBinding::mock()),
        }
    }

    fn bindings_mut(&mut self) -> impl Iterator<Item = &mut ClientBinding> {
        [
            Some(&mut self.grounder),
            Some(&mut self.embedder),
            Some(&mut self.ranker),
            Some(&mut self.judge),
            self.tracer.as_mut(),
        ]
        .into_iter()
        .flatten()
    }
}

/// Explicit seeds; none has a default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub downsample: u64,
    pub ranker: u64,
    pub clustering: u64,
    pub mock: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self {
            downsample: seed,
            ranker: seed,
            clustering: seed,
            mock: seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageName {
    Ingest,
    Downsample,
    Difficulty,
    Alignment,
    Diversity,
    Ambiguity,
    Review,
    Traces,
}

impl StageName {
    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Ingest => "ingest",
            StageName::Downsample => "downsample",
            StageName::Difficulty => "difficulty",
            StageName::Alignment => "alignment",
            StageName::Diversity => "diversity",
            StageName::Ambiguity => "ambiguity",
            StageName::Review => "review",
            StageName::Traces => "traces",
        }
    }

    /// Filtering stages between ingest and review, in the default order.
    pub const DEFAULT_ORDER: [StageName; 5] = [
        StageName::Downsample,
        StageName::Difficulty,
        StageName::Alignment,
        StageName::Diversity,
        StageName::Ambiguity,
    ];
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSettings {
    pub enabled: bool,
    pub style: OverlayStyle,
    pub check: TraceCheck,
}

/// Declarative description of a curation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub sources: Vec<SourceSpec>,
    pub seeds: Seeds,
    pub clients: Clients,
    /// Base directory for relative image references.
    #[serde(default)]
    pub image_root: Option<PathBuf>,
    #[serde(default)]
    pub eligibility: EligibilityRule,
    #[serde(default)]
    pub diversity: DiversityConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub traces: TraceSettings,
    /// Filtering stages to run between ingest and review.
    #[serde(default = "default_order")]
    pub stage_order: Vec<StageName>,
}

fn default_order() -> Vec<StageName> {
    StageName::DEFAULT_ORDER.to_vec()
}

impl PipelineConfig {
    /// Reads a TOML config. Relative paths resolve against the file's
    /// directory, then the config is validated.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_relative(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_relative(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for s in &mut self.sources {
            fix(&mut s.path);
        }
        if let Some(root) = &mut self.image_root {
            fix(root);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Config("at least one source is required".into()));
        }
        let mut names = BTreeMap::new();
        for s in &self.sources {
            if names.insert(s.name.as_str(), ()).is_some() {
                return Err(Error::Config(format!("duplicate source name {:?}", s.name)));
            }
            if !s.path.is_file() {
                return Err(Error::Config(format!(
                    "source {:?}: {} does not exist",
                    s.name,
                    s.path.display()
                )));
            }
            if let Some(f) = s.downsample {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Config(format!(
                        "source {:?}: downsample fraction {f} outside (0, 1]",
                        s.name
                    )));
                }
            }
        }
        if let Some(root) = &self.image_root {
            if !root.is_dir() {
                return Err(Error::Config(format!(
                    "image_root {} is not a directory",
                    root.display()
                )));
            }
        }
        let mut seen = Vec::new();
        for st in &self.stage_order {
            if !StageName::DEFAULT_ORDER.contains(st) {
                return Err(Error::Config(format!(
                    "stage {:?} cannot appear in stage_order",
                    st.as_str()
                )));
            }
            if seen.contains(st) {
                return Err(Error::Config(format!(
                    "stage {:?} listed twice",
                    st.as_str()
                )));
            }
            seen.push(*st);
        }
        if !(self.diversity.ratio > 0.0 && self.diversity.ratio <= 1.0) {
            return Err(Error::Config("diversity.ratio must lie in (0, 1]".into()));
        }
        if self.traces.enabled && self.clients.tracer.is_none() {
            return Err(Error::Config(
                "traces are enabled but clients.tracer is missing".into(),
            ));
        }
        self.eligibility.validate()?;
        Ok(())
    }

    /// Forces every binding to the mock backend.
    pub fn force_mock(&mut self) {
        for b in self.clients.bindings_mut() {
            b.kind = BindingKind::Mock;
        }
    }

    /// Replaces every seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.seeds = Seeds::all(seed);
    }
}
