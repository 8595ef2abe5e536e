//! Coordinate types, hit tests, model-output parsing and the
//! aspect-preserving resize rule.
//!
//! All boxes and points live in absolute pixel space of a stated image.
//! Model-space predictions are mapped back with [`rescale_bbox`] as soon as
//! they are parsed, so every other module only sees original-image pixels.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Qwen-style patch edge in pixels.
pub const DEFAULT_PATCH: u32 = 28;
/// Lower pixel budget used for training and inference.
pub const DEFAULT_MIN_PIXELS: u64 = 3136;
/// Upper pixel budget used for training and inference.
pub const DEFAULT_MAX_PIXELS: u64 = 846_720;

/// Axis-aligned box `(x1, y1, x2, y2)` with `x1 < x2`, `y1 < y2`.
///
/// Serialized as a bare `[x1, y1, x2, y2]` array.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let all = [x1, y1, x2, y2];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input(format!(
                "box coordinates must be finite and non-negative: {all:?}"
            )));
        }
        if !(x1 < x2 && y1 < y2) {
            return Err(Error::input(format!("degenerate box {all:?}")));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from two arbitrary corners, swapping coordinates as needed.
    pub fn from_corners(ax: f64, ay: f64, bx: f64, by: f64) -> Result<Self> {
        Self::new(ax.min(bx), ay.min(by), ax.max(bx), ay.max(by))
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> Point {
        Point {
            x: (self.x1 + self.x2) / 2.0,
            y: (self.y1 + self.y2) / 2.0,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// True when the box fits inside an image of the given size.
    pub fn fits_within(&self, dims: ImageDims) -> bool {
        self.x2 <= dims.width as f64 && self.y2 <= dims.height as f64
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl fmt::Debug for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BBox[{}, {}, {}, {}]",
            self.x1, self.y1, self.x2, self.y2
        )
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.x1, self.y1, self.x2, self.y2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0) {
            return Err(Error::input(format!("invalid point ({x}, {y})")));
        }
        Ok(Self { x, y })
    }
}

impl TryFrom<[f64; 2]> for Point {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Image size in pixels; both sides are at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input(format!(
                "image dims must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

/// Boundary-inclusive containment.
pub fn point_in_box(p: Point, bbox: &BBox) -> bool {
    bbox.x1 <= p.x && p.x <= bbox.x2 && bbox.y1 <= p.y && p.y <= bbox.y2
}

/// A prediction is correct when its center lies inside the ground truth.
pub fn center_hit(pred: &BBox, gt: &BBox) -> bool {
    point_in_box(pred.center(), gt)
}

/// Maps a box between two image sizes using the per-axis ratio.
///
/// The result is clamped to the target image.
pub fn rescale_bbox(bbox: &BBox, from: ImageDims, to: ImageDims) -> Result<BBox> {
    ImageDims::new(from.width, from.height)?;
    ImageDims::new(to.width, to.height)?;
    let (tw, th) = (to.width as f64, to.height as f64);
    let (fw, fh) = (from.width as f64, from.height as f64);
    // multiply before dividing so exact ratios stay exact
    BBox::new(
        (bbox.x1 * tw / fw).min(tw),
        (bbox.y1 * th / fh).min(th),
        (bbox.x2 * tw / fw).min(tw),
        (bbox.y2 * th / fh).min(th),
    )
}

/// Pixel budget and patch size for [`smart_resize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResizeBounds {
    pub patch: u32,
    pub min_pixels: u64,
    pub max_pixels: u64,
}

impl Default for ResizeBounds {
    fn default() -> Self {
        Self {
            patch: DEFAULT_PATCH,
            min_pixels: DEFAULT_MIN_PIXELS,
            max_pixels: DEFAULT_MAX_PIXELS,
        }
    }
}

/// Output of [`smart_resize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resized {
    pub dims: ImageDims,
    /// A side rounded to zero and was clamped to one patch.
    pub clamped: bool,
}

/// Picks model-input dims: patch multiples, area inside the pixel budget,
/// aspect ratio kept as close as the patch grid allows.
///
/// Each side is first rounded to the nearest patch multiple. If the area is
/// above the budget both sides shrink by `sqrt(h*w / max)` and are floored
/// to the grid; if below, they grow by `sqrt(min / (h*w))` and are ceiled.
/// Extreme aspect ratios can still miss the budget after that; in that case
/// the grid pair inside the budget with the closest aspect ratio is used.
pub fn smart_resize(dims: ImageDims, bounds: ResizeBounds) -> Result<Resized> {
    let ResizeBounds {
        patch,
        min_pixels,
        max_pixels,
    } = bounds;
    if patch == 0 {
        return Err(Error::input("patch must be at least 1"));
    }
    if min_pixels > max_pixels {
        return Err(Error::input(format!(
            "min_pixels {min_pixels} exceeds max_pixels {max_pixels}"
        )));
    }
    let dims = ImageDims::new(dims.width, dims.height)?;
    let f = patch as f64;
    let (w, h) = (dims.width as f64, dims.height as f64);

    let mut clamped = false;
    let mut round_side = |v: f64| {
        let r = (v / f).round() * f;
        if r < f {
            clamped = true;
            f
        } else {
            r
        }
    };
    let mut w_bar = round_side(w);
    let mut h_bar = round_side(h);

    let area = w_bar * h_bar;
    if area > max_pixels as f64 {
        let beta = (w * h / max_pixels as f64).sqrt();
        w_bar = f.max((w / beta / f).floor() * f);
        h_bar = f.max((h / beta / f).floor() * f);
    } else if area < min_pixels as f64 {
        let beta = (min_pixels as f64 / (w * h)).sqrt();
        w_bar = (w * beta / f).ceil() * f;
        h_bar = (h * beta / f).ceil() * f;
    }

    let mut out = (w_bar as u64, h_bar as u64);
    let in_budget = |(a, b): (u64, u64)| (min_pixels..=max_pixels).contains(&(a * b));
    if !in_budget(out) {
        if let Some(pair) = closest_grid_pair(dims, bounds) {
            out = pair;
        }
    }
    Ok(Resized {
        dims: ImageDims::new(
            u32::try_from(out.0).unwrap_or(u32::MAX),
            u32::try_from(out.1).unwrap_or(u32::MAX),
        )?,
        clamped,
    })
}

/// Exhaustive search over grid heights for the in-budget pair whose aspect
/// ratio is closest (in log space) to the input's.
fn closest_grid_pair(dims: ImageDims, bounds: ResizeBounds) -> Option<(u64, u64)> {
    let p = bounds.patch as u64;
    let target = (dims.width as f64 / dims.height as f64).ln();
    let mut best: Option<((u64, u64), f64)> = None;
    let max_cells = bounds.max_pixels / (p * p);
    for hc in 1..=max_cells {
        let h = hc * p;
        // smallest and largest width multiples keeping area within budget
        let w_lo = bounds.min_pixels.div_ceil(h).div_ceil(p).max(1) * p;
        let w_hi = bounds.max_pixels / h / p * p;
        if w_lo > w_hi {
            continue;
        }
        let ideal = (h as f64 * target.exp() / p as f64).round().max(1.0) as u64 * p;
        let w = ideal.clamp(w_lo, w_hi);
        let err = ((w as f64 / h as f64).ln() - target).abs();
        if best.is_none_or(|(_, e)| err < e) {
            best = Some(((w, h), err));
        }
    }
    best.map(|(pair, _)| pair)
}

/// Extracts a box from free-form model output.
///
/// Looks inside the first `<answer>...</answer>` span first, then anywhere
/// in the text. Accepts integer or decimal coordinates with arbitrary inner
/// whitespace; swaps corners so the result is ordered. Anything else,
/// including a tuple that does not form a valid box, yields `None`.
pub fn parse_bbox(text: &str) -> Option<BBox> {
    if let Some(span) = answer_span(text) {
        if let Some(b) = first_tuple(span) {
            return tuple_to_box(b);
        }
    }
    first_tuple(text).and_then(tuple_to_box)
}

/// Content of the first complete `<answer>...</answer>` span.
pub(crate) fn answer_span(text: &str) -> Option<&str> {
    const OPEN: &str = "<answer>";
    const CLOSE: &str = "</answer>";
    let start = text.find(OPEN)? + OPEN.len();
    let len = text[start..].find(CLOSE)?;
    Some(&text[start..start + len])
}

pub(crate) fn tuple_to_box(v: [f64; 4]) -> Option<BBox> {
    BBox::from_corners(v[0], v[1], v[2], v[3]).ok()
}

/// First `[a, b, c, d]` with four numeric entries.
pub(crate) fn first_tuple(text: &str) -> Option<[f64; 4]> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while let Some(off) = bytes[i..].iter().position(|&b| b == b'[') {
        let open = i + off;
        if let Some(t) = tuple_at(bytes, open + 1) {
            return Some(t);
        }
        i = open + 1;
    }
    None
}

/// Parses `n , n , n , n ]` starting right after a `[`.
fn tuple_at(bytes: &[u8], mut pos: usize) -> Option<[f64; 4]> {
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        pos = skip_ws(bytes, pos);
        let start = pos;
        if pos < bytes.len() && (bytes[pos] == b'-' || bytes[pos] == b'+') {
            pos += 1;
        }
        let digits_start = pos;
        while pos < bytes.len() && (bytes[pos].is_ascii_digit() || bytes[pos] == b'.') {
            pos += 1;
        }
        if pos == digits_start {
            return None;
        }
        // the slice is ASCII by construction
        let s = std::str::from_utf8(&bytes[start..pos]).ok()?;
        *slot = s.parse::<f64>().ok()?;
        pos = skip_ws(bytes, pos);
        let sep = if k == 3 { b']' } else { b',' };
        if bytes.get(pos) != Some(&sep) {
            return None;
        }
        pos += 1;
    }
    Some(out)
}

fn skip_ws(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}
