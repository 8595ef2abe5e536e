//! GRPO reward signal: format, solution and length components and their
//! unscaled integer sum.
//!
//! The accepted rollout shape is pinned as grammar `think-answer/v1`:
//!
//! ```text
//! <think>CONTENT</think> WS? <answer> WS? [n, n, n, n] WS? </answer>
//! ```
//!
//! with non-blank `CONTENT` that contains no tag, and nothing before or
//! after. Tokens are counted over the full rollout text.

use serde::{Deserialize, Serialize};

use crate::geometry::{answer_span, center_hit, first_tuple, parse_bbox, tuple_to_box, BBox};

pub const GRAMMAR_VERSION: &str = "think-answer/v1";
pub const DEFAULT_TOKEN_LIMIT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: u8,
    pub solution: u8,
    pub length: u8,
    pub total: u8,
}

impl RewardBreakdown {
    fn new(format: bool, solution: bool, length: bool) -> Self {
        let (f, s, l) = (format as u8, solution as u8, length as u8);
        Self {
            format: f,
            solution: s,
            length: l,
            total: f + s + l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerKind {
    #[default]
    Whitespace,
    /// `ceil(bytes / 4)`.
    BytesApprox,
    /// Supplied at runtime through [`RewardEngine::with_counter`].
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub token_limit: usize,
    pub tokenizer: TokenizerKind,
    pub grammar: String,
    /// Which text the length reward counts.
    pub length_scope: String,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            token_limit: DEFAULT_TOKEN_LIMIT,
            tokenizer: TokenizerKind::Whitespace,
            grammar: GRAMMAR_VERSION.into(),
            length_scope: "full-rollout".into(),
        }
    }
}

/// Counts tokens for the length reward.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

pub struct BytesApproxCounter;

impl TokenCounter for BytesApproxCounter {
    fn count(&self, text: &str) -> usize {
        text.len().div_ceil(4)
    }
}

/// Answer of the first `<answer>` span when one exists, otherwise the
/// first box anywhere in the text.
pub fn extract_answer(text: &str) -> Option<BBox> {
    match answer_span(text) {
        Some(span) => first_tuple(span).and_then(tuple_to_box),
        None => parse_bbox(text),
    }
}

/// True when `text` matches the pinned think/answer grammar.
pub fn follows_format(text: &str) -> bool {
    let Some(rest) = text.strip_prefix("<think>") else {
        return false;
    };
    let Some(end) = rest.find("</think>") else {
        return false;
    };
    let thought = &rest[..end];
    if thought.trim().is_empty() || contains_tag(thought) {
        return false;
    }
    let rest = rest[end + "</think>".len()..].trim_start();
    let Some(rest) = rest.strip_prefix("<answer>") else {
        return false;
    };
    let Some(inner) = rest.strip_suffix("</answer>") else {
        return false;
    };
    is_single_tuple(inner)
}

fn contains_tag(s: &str) -> bool {
    ["<think>", "</think>", "<answer>", "</answer>"]
        .iter()
        .any(|t| s.contains(t))
}

/// `WS? [n, n, n, n] WS?` and nothing else.
fn is_single_tuple(s: &str) -> bool {
    let t = s.trim();
    if !(t.starts_with('[') && t.ends_with(']')) {
        return false;
    }
    let body = &t[1..t.len() - 1];
    let parts: Vec<&str> = body.split(',').collect();
    parts.len() == 4
        && parts.iter().all(|p| {
            let p = p.trim();
            !p.is_empty()
                && p.bytes()
                    .all(|b| b.is_ascii_digit() || b == b'.' || b == b'-' || b == b'+')
                && p.parse::<f64>().is_ok_and(f64::is_finite)
        })
}

/// Scores rollouts against a ground-truth box.
pub struct RewardEngine {
    config: RewardConfig,
    counter: Box<dyn TokenCounter>,
}

impl std::fmt::Debug for RewardEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RewardEngine")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl RewardEngine {
    /// Engine with a built-in counter. `External` needs [`Self::with_counter`].
    pub fn new(config: RewardConfig) -> crate::error::Result<Self> {
        if config.token_limit < 1 {
            return Err(crate::error::Error::Config(
                "token_limit must be >= 1".into(),
            ));
        }
        if config.grammar != GRAMMAR_VERSION {
            return Err(crate::error::Error::Config(format!(
                "unknown reward grammar {:?}",
                config.grammar
            )));
        }
        let counter: Box<dyn TokenCounter> = match config.tokenizer {
            TokenizerKind::Whitespace => Box::new(WhitespaceCounter),
            TokenizerKind::BytesApprox => Box::new(BytesApproxCounter),
            TokenizerKind::External => {
                return Err(crate::error::Error::Config(
                    "external tokenizer must be supplied with RewardEngine::with_counter".into(),
                ))
            }
        };
        Ok(Self { config, counter })
    }

    pub fn with_counter(mut config: RewardConfig, counter: Box<dyn TokenCounter>) -> Self {
        config.tokenizer = TokenizerKind::External;
        Self { config, counter }
    }

    pub fn config(&self) -> &RewardConfig {
        &self.config
    }

    pub fn score(&self, text: &str, gt: &BBox) -> RewardBreakdown {
        let format = follows_format(text);
        let solution = extract_answer(text).is_some_and(|b| center_hit(&b, gt));
        let length = self.counter.count(text) <= self.config.token_limit;
        RewardBreakdown::new(format, solution, length)
    }
}

/// Scores one rollout with a built-in counter. An `External` tokenizer
/// setting counts whitespace tokens here; plug a real one in through
/// [`RewardEngine::with_counter`].
pub fn reward_breakdown(text: &str, gt: &BBox, config: &RewardConfig) -> RewardBreakdown {
    let counter: &dyn TokenCounter = match config.tokenizer {
        TokenizerKind::BytesApprox => &BytesApproxCounter,
        _ => &WhitespaceCounter,
    };
    let format = follows_format(text);
    let solution = extract_answer(text).is_some_and(|b| center_hit(&b, gt));
    let length = counter.count(text) <= config.token_limit;
    RewardBreakdown::new(format, solution, length)
}

/// Batch input row `{id, text, gt_bbox}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRequest {
    pub id: String,
    pub text: String,
    pub gt_bbox: BBox,
}

/// Batch output row `{id, format, solution, length, total}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub id: String,
    #[serde(flatten)]
    pub reward: RewardBreakdown,
}

pub fn score_batch(engine: &RewardEngine, rows: &[RewardRequest]) -> Vec<RewardRow> {
    rows.iter()
        .map(|r| RewardRow {
            id: r.id.clone(),
            reward: engine.score(&r.text, &r.gt_bbox),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn canonical_rollout_scores_three() {
        let text = "<think>To play the next song, I should click on the right arrow icon.</think><answer>[445,1016,508,1053]</answer>";
        let r = reward_breakdown(
            text,
            &gt(440.0, 1000.0, 520.0, 1060.0),
            &RewardConfig::default(),
        );
        assert_eq!(
            r,
            RewardBreakdown {
                format: 1,
                solution: 1,
                length: 1,
                total: 3
            }
        );
    }

    #[test]
    fn bare_text_scores_length_only() {
        let r = reward_breakdown(
            "click here",
            &gt(0.0, 0.0, 5.0, 5.0),
            &RewardConfig::default(),
        );
        assert_eq!((r.format, r.solution, r.length, r.total), (0, 0, 1, 1));
    }

    #[test]
    fn long_think_and_miss_scores_format_only() {
        let think = vec!["word"; 120].join(" ");
        let text = format!("<think>{think}</think> <answer>[100,100,120,120]</answer>");
        let r = reward_breakdown(&text, &gt(0.0, 0.0, 50.0, 50.0), &RewardConfig::default());
        assert_eq!((r.format, r.solution, r.length, r.total), (1, 0, 0, 1));
    }

    #[test]
    fn answer_span_takes_precedence() {
        let t = "[1,2,3,4] junk <answer>[5,6,7,8]</answer>";
        assert_eq!(extract_answer(t), Some(gt(5.0, 6.0, 7.0, 8.0)));
        assert_eq!(
            extract_answer("<answer>[445,1016,508,1053]</answer>"),
            Some(gt(445.0, 1016.0, 508.0, 1053.0))
        );
        assert_eq!(extract_answer("no answer"), None);
        // a span without a box does not fall back to text outside it
        assert_eq!(extract_answer("[1,2,3,4] <answer>none</answer>"), None);
    }

    #[test]
    fn grammar_edges() {
        let ok = "<think>x</think>\n<answer> [1, 2, 3.5, 4] </answer>";
        assert!(follows_format(ok));
        for bad in [
            "<think> </think><answer>[1,2,3,4]</answer>",
            "<think>x</think><answer>[1,2,3,4]</answer> trailing",
            "lead <think>x</think><answer>[1,2,3,4]</answer>",
            "<think>x</think><answer>[1,2,3]</answer>",
            "<think>x</think><answer>[1,2,3,4][5,6,7,8]</answer>",
            "<think>x <answer>[1,2,3,4]</answer></think><answer>[1,2,3,4]</answer>",
            "<answer>[1,2,3,4]</answer>",
            "<think>x</think>",
        ] {
            assert!(!follows_format(bad), "{bad}");
        }
    }

    #[test]
    fn bytes_counter_and_engine_agree() {
        let cfg = RewardConfig {
            tokenizer: TokenizerKind::BytesApprox,
            token_limit: 3,
            ..RewardConfig::default()
        };
        let engine = RewardEngine::new(cfg.clone()).unwrap();
        let g = gt(0.0, 0.0, 1.0, 1.0);
        assert_eq!(engine.score("123456789012", &g).length, 1);
        assert_eq!(engine.score("1234567890123", &g).length, 0);
        assert_eq!(engine.score("abc", &g), reward_breakdown("abc", &g, &cfg));
    }

    #[test]
    fn external_tokenizer_requires_counter() {
        let cfg = RewardConfig {
            tokenizer: TokenizerKind::External,
            ..RewardConfig::default()
        };
        assert!(RewardEngine::new(cfg.clone()).is_err());
        struct Chars;
        impl TokenCounter for Chars {
            fn count(&self, t: &str) -> usize {
                t.chars().count()
            }
        }
        let e = RewardEngine::with_counter(cfg, Box::new(Chars));
        assert_eq!(e.score(&"a".repeat(101), &gt(0.0, 0.0, 1.0, 1.0)).length, 0);
    }

    #[test]
    fn row_wire_format() {
        let row = RewardRow {
            id: "x".into(),
            reward: RewardBreakdown::new(true, false, true),
        };
        assert_eq!(
            serde_json::to_string(&row).unwrap(),
            r#"{"id":"x","format":1,"solution":0,"length":1,"total":2}"#
        );
    }
}
