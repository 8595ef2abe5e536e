//! Chain-of-thought trace generation for supervised fine-tuning.
//!
//! A trace request pairs the versioned guidance prompt with a copy of the
//! screenshot on which the ground-truth box is drawn as a red outline. The
//! model answers with a `{"response": ...}` object; the response is checked
//! against the prompt's own criteria and stored with any violations.

use std::path::Path;

use image::{DynamicImage, ImageFormat, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::client::{resolve_image_path, ImagePayload, ModelClient};
use crate::difficulty::Deferred;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::record::GroundingRecord;

pub const PROMPT_VERSION: &str = "cot-prompt/v1";
pub const PROMPT_TEMPLATE: &str = include_str!("../resources/cot_prompt_v1.txt");
pub const INSTRUCTION_SLOT: &str = "<instruction>";

/// Default phrases a trace must not contain (matched case-insensitively).
pub const DEFAULT_FORBIDDEN: [&str; 3] = ["red bounding box", "highlighted", "red box"];

/// Fills the instruction slot of the template.
pub fn render_prompt(instruction: &str) -> String {
    PROMPT_TEMPLATE.replacen(INSTRUCTION_SLOT, instruction, 1)
}

/// How the ground-truth outline is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlayStyle {
    /// Outline thickness in pixels, drawn inward from the box edge.
    pub line_width: u32,
    pub color: [u8; 3],
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            line_width: 3,
            color: [255, 0, 0],
        }
    }
}

/// A ready-to-send trace request.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRequest {
    pub id: String,
    pub prompt: String,
    /// PNG of the screenshot with the outline drawn on it.
    pub image: ImagePayload,
}

/// Returns a copy of `image` with `bbox` outlined.
pub fn draw_overlay(image: &DynamicImage, bbox: &BBox, style: OverlayStyle) -> RgbaImage {
    let mut out = image.to_rgba8();
    let (w, h) = out.dimensions();
    if w == 0 || h == 0 {
        return out;
    }
    let left = (bbox.x1().floor() as u32).min(w - 1);
    let top = (bbox.y1().floor() as u32).min(h - 1);
    let right = ((bbox.x2().ceil() as u32).saturating_sub(1)).clamp(left, w - 1);
    let bottom = ((bbox.y2().ceil() as u32).saturating_sub(1)).clamp(top, h - 1);
    let lw = style.line_width.max(1);
    let [r, g, b] = style.color;
    let px = Rgba([r, g, b, 255]);
    for y in top..=bottom {
        for x in left..=right {
            let edge = x < left + lw || x + lw > right || y < top + lw || y + lw > bottom;
            if edge {
                out.put_pixel(x, y, px);
            }
        }
    }
    out
}

/// Loads the record's screenshot, outlines its box and renders the prompt.
///
/// Fails with an input error when the image cannot be read or decoded, or
/// when the box does not fit the decoded image.
pub fn build_trace_request(
    record: &GroundingRecord,
    image_root: Option<&Path>,
    style: OverlayStyle,
) -> Result<TraceRequest> {
    record.validate()?;
    let path = resolve_image_path(image_root, &record.image_ref);
    let bytes = std::fs::read(&path).map_err(|e| {
        Error::input(format!(
            "record {}: cannot read image {}: {e}",
            record.id,
            path.display()
        ))
    })?;
    let img = image::load_from_memory(&bytes).map_err(|e| {
        Error::input(format!(
            "record {}: cannot decode image {}: {e}",
            record.id,
            path.display()
        ))
    })?;
    let actual = crate::geometry::ImageDims::new(img.width(), img.height())?;
    if !record.gt_box.fits_within(actual) {
        return Err(Error::input(format!(
            "record {}: box {} outside decoded {}x{} image",
            record.id,
            record.gt_box,
            img.width(),
            img.height()
        )));
    }
    let overlay = draw_overlay(&img, &record.gt_box, style);
    let mut png = Vec::new();
    overlay.write_to(&mut std::io::Cursor::new(&mut png), ImageFormat::Png)?;
    Ok(TraceRequest {
        id: record.id.clone(),
        prompt: render_prompt(&record.instruction),
        image: ImagePayload::png(png),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceViolation {
    Empty,
    TooManySentences,
    MentionsHighlight,
}

/// Checks applied to a parsed trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceCheck {
    pub max_sentences: usize,
    pub forbidden_phrases: Vec<String>,
}

impl Default for TraceCheck {
    fn default() -> Self {
        Self {
            max_sentences: 2,
            forbidden_phrases: DEFAULT_FORBIDDEN.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedTrace {
    pub trace: String,
    pub violations: Vec<TraceViolation>,
}

/// Counts sentences as runs of `.`, `!` or `?` followed by whitespace or
/// the end of text, plus a trailing unterminated fragment. Abbreviations
/// such as "e.g. " count as a boundary.
pub fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.trim().chars().collect();
    let mut count = 0;
    let mut pending = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            while i + 1 < chars.len() && matches!(chars[i + 1], '.' | '!' | '?') {
                i += 1;
            }
            let at_boundary = i + 1 == chars.len() || chars[i + 1].is_whitespace();
            if at_boundary && pending {
                count += 1;
                pending = false;
            }
        } else if !c.is_whitespace() {
            pending = true;
        }
        i += 1;
    }
    count + pending as usize
}

/// Pulls the `response` string out of a model answer. Markdown code
/// fences and text around the outermost braces are tolerated.
fn extract_response(raw: &str) -> Option<String> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if end < start {
        return None;
    }
    let value: serde_json::Value = serde_json::from_str(&raw[start..=end]).ok()?;
    value.get("response")?.as_str().map(str::to_string)
}

pub fn parse_and_validate_trace(raw: &str, check: &TraceCheck) -> Result<ValidatedTrace> {
    let trace = extract_response(raw).ok_or_else(|| Error::TraceParse {
        raw: raw.to_string(),
    })?;
    let mut violations = Vec::new();
    if trace.trim().is_empty() {
        violations.push(TraceViolation::Empty);
    }
    if count_sentences(&trace) > check.max_sentences {
        violations.push(TraceViolation::TooManySentences);
    }
    let lower = trace.to_lowercase();
    if check
        .forbidden_phrases
        .iter()
        .any(|p| !p.is_empty() && lower.contains(&p.to_lowercase()))
    {
        violations.push(TraceViolation::MentionsHighlight);
    }
    Ok(ValidatedTrace {
        trace: trace.trim().to_string(),
        violations,
    })
}

/// Persisted trace row `{id, trace, violations, prompt_version}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub id: String,
    pub trace: String,
    pub violations: Vec<TraceViolation>,
    pub prompt_version: String,
}

impl TraceRow {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Generates one trace per record. Input errors abort; request and parse
/// failures are reported per record as deferred. Rows are in input order.
pub fn generate_traces(
    records: &[GroundingRecord],
    client: &ModelClient,
    image_root: Option<&Path>,
    style: OverlayStyle,
    check: &TraceCheck,
) -> Result<(Vec<TraceRow>, Vec<Deferred>)> {
    let results = client.fan_out(records, |r| -> Result<TraceRow> {
        let req = build_trace_request(r, image_root, style)?;
        let raw = client.complete(&req.prompt, Some(&req.image))?;
        let v = parse_and_validate_trace(&raw, check)?;
        Ok(TraceRow {
            id: r.id.clone(),
            trace: v.trace,
            violations: v.violations,
            prompt_version: PROMPT_VERSION.into(),
        })
    });
    let mut rows = Vec::new();
    let mut deferred = Vec::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(e @ Error::Input(_)) => return Err(e),
            Err(e) => deferred.push(Deferred {
                id: r.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok((rows, deferred))
}
