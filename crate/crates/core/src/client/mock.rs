use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, ImagePayload, JudgeKind};
use crate::digest::{hash_parts, keyed_rng, keyed_unit};
use crate::error::{Error, Result};
use crate::geometry::{point_in_box, rescale_bbox, BBox, ImageDims, Point};
use crate::record::GroundingRecord;

/// Knobs for the offline backend. Every output is a pure function of these
/// settings and the request inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    pub seed: u64,
    /// Probability that a grounding answer center-hits the ground truth.
    pub hit_rate: f64,
    /// Probability that a grounding answer contains no box at all.
    pub garbage_rate: f64,
    /// Probability of a "yes" from the alignment judge.
    pub alignment_yes: f64,
    /// Probability of a "yes" from the ambiguity judge.
    pub ambiguity_yes: f64,
    pub embed_dim: usize,
    /// Fixed grounding outputs by record id.
    pub scripted_ground: BTreeMap<String, String>,
    /// Fixed judge outputs keyed by `"<kind>:<record id>"`.
    pub scripted_judge: BTreeMap<String, String>,
    /// Record ids whose requests always fail at the transport level.
    pub fail_ids: BTreeSet<String>,
    /// Attempts reported for injected failures.
    pub fail_attempts: u32,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            hit_rate: 0.5,
            garbage_rate: 0.05,
            alignment_yes: 0.7,
            ambiguity_yes: 0.8,
            embed_dim: 64,
            scripted_ground: BTreeMap::new(),
            scripted_judge: BTreeMap::new(),
            fail_ids: BTreeSet::new(),
            fail_attempts: 4,
        }
    }
}

const CANNED_TRACES: [&str; 6] = [
    "The screen shows a settings page of a desktop application. The requested option sits in the left navigation list.",
    "The image features a web browser with a search results page. The link is the first entry below the search bar.",
    "The interface is a mobile music player. The control is the right-pointing arrow next to the play button.",
    "This is a file manager window. The toolbar at the top holds the button. It is the second icon from the left.",
    "The screenshot shows a spreadsheet editor. The red box marks the cell in the header row.",
    "The page is an online store checkout form. The button labelled with the instruction text is at the bottom right.",
];

#[derive(Debug, Clone)]
pub struct MockBackend {
    settings: MockSettings,
}

impl MockBackend {
    pub fn new(settings: MockSettings) -> Self {
        Self { settings }
    }

    fn check_failure(&self, id: &str) -> Result<()> {
        if self.settings.fail_ids.contains(id) {
            return Err(Error::Request {
                id: id.to_string(),
                attempts: self.settings.fail_attempts,
                message: "injected transport failure".into(),
            });
        }
        Ok(())
    }

    fn synth_prediction(&self, record: &GroundingRecord, model_dims: ImageDims) -> String {
        let seed = self.settings.seed;
        let id = record.id.as_bytes();
        let u = keyed_unit(seed, &[b"ground", id]);
        let mut rng = keyed_rng(seed, &[b"ground-box", id]);
        let gt = match rescale_bbox(&record.gt_box, record.dims, model_dims) {
            Ok(b) => b,
            Err(_) => return "Unable to locate the element.".into(),
        };
        let (mw, mh) = (model_dims.width as f64, model_dims.height as f64);

        if u < self.settings.hit_rate {
            // center within the inner half of the target
            let cx = gt.x1() + gt.width() * rng.random_range(0.25..0.75);
            let cy = gt.y1() + gt.height() * rng.random_range(0.25..0.75);
            let hw = rng.random_range(2.0..30.0f64);
            let hh = rng.random_range(2.0..20.0f64);
            return format_answer(cx, cy, hw, hh, mw, mh);
        }
        if u < self.settings.hit_rate + self.settings.garbage_rate {
            return "I could not find that element on the screen.".into();
        }
        for _ in 0..64 {
            let cx = rng.random_range(0.0..mw);
            let cy = rng.random_range(0.0..mh);
            let c = Point { x: cx, y: cy };
            // keep a margin so the rounded center still misses
            let grown = BBox::new(
                (gt.x1() - 2.0).max(0.0),
                (gt.y1() - 2.0).max(0.0),
                gt.x2() + 2.0,
                gt.y2() + 2.0,
            )
            .unwrap_or(gt);
            if !point_in_box(c, &grown) {
                let hw = rng.random_range(2.0..30.0f64);
                let hh = rng.random_range(2.0..20.0f64);
                return format_answer(cx, cy, hw, hh, mw, mh);
            }
        }
        "The element is not visible.".into()
    }

    fn synth_embedding(&self, record: &GroundingRecord) -> Vec<f64> {
        let d = self.settings.embed_dim.max(1);
        let seed = self.settings.seed;
        let mut v = vec![0.0; d];
        let mut add = |parts: &[&[u8]], weight: f64| {
            let mut rng = keyed_rng(seed, parts);
            for x in v.iter_mut() {
                *x += weight * rng.random_range(-1.0..1.0);
            }
        };
        let words: Vec<String> = record
            .instruction
            .split_whitespace()
            .map(str::to_lowercase)
            .collect();
        for w in &words {
            add(&[b"tok", w.as_bytes()], 1.0);
        }
        for pair in words.windows(2) {
            add(&[b"bigram", pair[0].as_bytes(), pair[1].as_bytes()], 0.25);
        }
        add(&[b"img", record.image_ref.as_bytes()], 0.5);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

fn format_answer(cx: f64, cy: f64, hw: f64, hh: f64, mw: f64, mh: f64) -> String {
    let x1 = (cx - hw).max(0.0).round();
    let y1 = (cy - hh).max(0.0).round();
    let x2 = (cx + hw).min(mw).round().max(x1 + 1.0);
    let y2 = (cy + hh).min(mh).round().max(y1 + 1.0);
    format!("<answer>[{x1},{y1},{x2},{y2}]</answer>")
}

impl Backend for MockBackend {
    fn ground_raw(
        &self,
        record: &GroundingRecord,
        model_dims: ImageDims,
        _prompt: &str,
    ) -> Result<String> {
        self.check_failure(&record.id)?;
        if let Some(s) = self.settings.scripted_ground.get(&record.id) {
            return Ok(s.clone());
        }
        Ok(self.synth_prediction(record, model_dims))
    }

    fn embed_raw(&self, record: &GroundingRecord) -> Result<Vec<f64>> {
        self.check_failure(&record.id)?;
        Ok(self.synth_embedding(record))
    }

    fn judge_raw(
        &self,
        kind: JudgeKind,
        record: &GroundingRecord,
        bbox: &BBox,
        _prompt: &str,
    ) -> Result<String> {
        self.check_failure(&record.id)?;
        let key = format!("{}:{}", kind.as_str(), record.id);
        if let Some(s) = self.settings.scripted_judge.get(&key) {
            return Ok(s.clone());
        }
        let rate = match kind {
            JudgeKind::Alignment => self.settings.alignment_yes,
            JudgeKind::Ambiguity => self.settings.ambiguity_yes,
        };
        let box_text = bbox.to_string();
        let u = keyed_unit(
            self.settings.seed,
            &[
                kind.as_str().as_bytes(),
                record.id.as_bytes(),
                box_text.as_bytes(),
            ],
        );
        Ok(if u < rate {
            "Yes".into()
        } else {
            "No, the box marks a different element.".into()
        })
    }

    fn complete_raw(&self, prompt: &str, image: Option<&ImagePayload>) -> Result<String> {
        let img_digest = image.map(|i| hash_parts(&[&i.bytes])).unwrap_or_default();
        let u = keyed_unit(
            self.settings.seed,
            &[b"complete", prompt.as_bytes(), img_digest.as_bytes()],
        );
        let pick = CANNED_TRACES[(u * CANNED_TRACES.len() as f64) as usize];
        Ok(serde_json::json!({ "response": pick }).to_string())
    }
}
