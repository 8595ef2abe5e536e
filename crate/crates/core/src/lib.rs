//! Curation, reward and evaluation toolkit for GUI visual-grounding data.
//!
//! The crate turns raw (screenshot, instruction, box) datasets into a
//! compact training set: zero-shot difficulty partitioning, a binary
//! alignment ranker's training data, embedding-based diversity selection,
//! judge filters and manual review. It also provides the verifiable
//! rewards used for reinforcement fine-tuning, chain-of-thought trace
//! generation, and grounding / classification metrics.

pub mod client;
pub mod difficulty;
pub mod digest;
pub mod diversity;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod jsonl;
pub mod metrics;
pub mod pipeline;
pub mod ranker;
pub mod record;
pub mod reward;
pub mod trace;

pub use client::{ClientConfig, MockSettings, ModelClient};
pub use difficulty::{partition_by_difficulty, PredictionCache};
pub use diversity::{select_diverse, DiversityConfig, EmbeddingMatrix};
pub use error::{Error, Result};
pub use geometry::{center_hit, parse_bbox, rescale_bbox, smart_resize, BBox, ImageDims, Point};
pub use metrics::{classification_report, element_accuracy, grounding_report};
pub use pipeline::{assemble_final, downsample, run_pipeline, PipelineConfig, PipelineManifest};
pub use ranker::{build_training_triplets, expand_benchmark_binary, EligibilityRule};
pub use record::GroundingRecord;
pub use reward::{reward_breakdown, RewardConfig, RewardEngine};
pub use trace::{build_trace_request, parse_and_validate_trace};
