//! Ranker training triplets and binary conversions of grounding benchmarks.
//!
//! Training data comes from easy records grouped by screenshot. An image
//! group is eligible when it has at least `M` correct zero-shot predictions
//! (per-source threshold). Inside an eligible group every annotation is
//! kept as a positive with probability one half; otherwise its box is
//! swapped with the box of another annotation of the same image and the
//! triplet becomes a negative. Single-annotation groups are positive.
//!
//! Benchmarks are expanded exhaustively: a group of `n` annotations yields
//! `n` positives and `n * (n - 1)` same-image negatives.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::difficulty::{Difficulty, DifficultyOutcome};
use crate::digest::keyed_rng;
use crate::error::{Error, Result};
use crate::geometry::{BBox, ImageDims};
use crate::record::{GroundingRecord, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    KeptOriginal,
    Swapped,
    BenchmarkPos,
    BenchmarkNeg,
}

/// Wire layout: `{id, image, text, bbox, label, origin}` plus the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerTriplet {
    pub id: String,
    #[serde(rename = "image")]
    pub image_ref: String,
    #[serde(flatten)]
    pub dims: ImageDims,
    pub text: String,
    #[serde(rename = "bbox")]
    pub bbox: BBox,
    pub label: Label,
    pub origin: Origin,
}

/// Per-source minimum number of correct predictions an image needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EligibilityRule {
    pub thresholds: BTreeMap<Source, u32>,
    /// Threshold for sources missing from the map.
    pub fallback: u32,
    /// Probability that an annotation keeps its own box.
    pub positive_prob: f64,
}

impl Default for EligibilityRule {
    fn default() -> Self {
        let thresholds = BTreeMap::from([
            (Source::AriaUiDesktop, 5),
            (Source::AriaUiMobile, 5),
            (Source::AriaUiWeb, 5),
            (Source::ShowUiDesktop, 1),
        ]);
        Self {
            thresholds,
            fallback: 1,
            positive_prob: 0.5,
        }
    }
}

impl EligibilityRule {
    pub fn threshold(&self, source: Source) -> u32 {
        self.thresholds
            .get(&source)
            .copied()
            .unwrap_or(self.fallback)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fallback < 1 || self.thresholds.values().any(|&m| m < 1) {
            return Err(Error::Config("eligibility thresholds must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.positive_prob) {
            return Err(Error::Config("positive_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Counts reported alongside training triplets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletStats {
    pub groups_seen: usize,
    pub groups_included: usize,
    pub positives: usize,
    pub negatives: usize,
}

/// Builds ranker training triplets from easy records.
///
/// Output is ordered by `(image, annotation id)`. Each image group draws
/// from its own seeded stream, so the result does not depend on group order.
pub fn build_training_triplets(
    easy: &[GroundingRecord],
    outcomes: &[DifficultyOutcome],
    rule: &EligibilityRule,
    seed: u64,
) -> Result<(Vec<RankerTriplet>, TripletStats)> {
    rule.validate()?;
    let correct: HashSet<&str> = outcomes
        .iter()
        .filter(|o| o.label == Difficulty::Easy)
        .map(|o| o.id.as_str())
        .collect();
    let covered: HashSet<&str> = outcomes.iter().map(|o| o.id.as_str()).collect();
    if let Some(r) = easy.iter().find(|r| !covered.contains(r.id.as_str())) {
        return Err(Error::input(format!(
            "no difficulty outcome for record {}",
            r.id
        )));
    }

    let mut groups: BTreeMap<&str, Vec<&GroundingRecord>> = BTreeMap::new();
    for r in easy {
        groups.entry(r.image_ref.as_str()).or_default().push(r);
    }

    let mut stats = TripletStats::default();
    let mut out = Vec::new();
    for (image, mut members) in groups {
        stats.groups_seen += 1;
        members.sort_by(|a, b| a.id.cmp(&b.id));
        let dims = group_dims(image, &members)?;
        let m = members
            .iter()
            .map(|r| rule.threshold(r.source))
            .max()
            .unwrap_or(rule.fallback);
        let n_correct = members
            .iter()
            .filter(|r| correct.contains(r.id.as_str()))
            .count();
        if n_correct < m as usize {
            continue;
        }
        stats.groups_included += 1;

        let mut rng = keyed_rng(seed, &[b"ranker-group", image.as_bytes()]);
        for (i, r) in members.iter().enumerate() {
            let keep = members.len() == 1 || rng.random_bool(rule.positive_prob);
            let alternatives: Vec<&BBox> = if keep {
                Vec::new()
            } else {
                members
                    .iter()
                    .enumerate()
                    .filter(|(j, o)| *j != i && o.gt_box != r.gt_box)
                    .map(|(_, o)| &o.gt_box)
                    .collect()
            };
            let triplet = if alternatives.is_empty() {
                stats.positives += 1;
                RankerTriplet {
                    id: r.id.clone(),
                    image_ref: r.image_ref.clone(),
                    dims,
                    text: r.instruction.clone(),
                    bbox: r.gt_box,
                    label: Label::Positive,
                    origin: Origin::KeptOriginal,
                }
            } else {
                stats.negatives += 1;
                let pick = alternatives[rng.random_range(0..alternatives.len())];
                RankerTriplet {
                    id: r.id.clone(),
                    image_ref: r.image_ref.clone(),
                    dims,
                    text: r.instruction.clone(),
                    bbox: *pick,
                    label: Label::Negative,
                    origin: Origin::Swapped,
                }
            };
            out.push(triplet);
        }
    }
    Ok((out, stats))
}

fn group_dims(image: &str, members: &[&GroundingRecord]) -> Result<ImageDims> {
    let dims = members[0].dims;
    if let Some(r) = members.iter().find(|r| r.dims != dims) {
        return Err(Error::input(format!(
            "image {image}: record {} has dims {}x{}, group has {}x{}",
            r.id, r.dims.width, r.dims.height, dims.width, dims.height
        )));
    }
    Ok(dims)
}

/// One benchmark annotation inside an image group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkAnnotation {
    pub id: String,
    pub instruction: String,
    pub bbox: BBox,
}

/// All annotations that share one screenshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkGroup {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<BenchmarkAnnotation>,
}

impl BenchmarkGroup {
    /// Groups records by image, ordered by image then annotation id.
    pub fn from_records(records: &[GroundingRecord]) -> Result<Vec<BenchmarkGroup>> {
        let mut by_image: BTreeMap<&str, Vec<&GroundingRecord>> = BTreeMap::new();
        for r in records {
            by_image.entry(r.image_ref.as_str()).or_default().push(r);
        }
        by_image
            .into_iter()
            .map(|(image, mut members)| {
                members.sort_by(|a, b| a.id.cmp(&b.id));
                let dims = group_dims(image, &members)?;
                Ok(BenchmarkGroup {
                    image: image.to_string(),
                    width: dims.width,
                    height: dims.height,
                    annotations: members
                        .iter()
                        .map(|r| BenchmarkAnnotation {
                            id: r.id.clone(),
                            instruction: r.instruction.clone(),
                            bbox: r.gt_box,
                        })
                        .collect(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinaryExpansion {
    pub triplets: Vec<RankerTriplet>,
    /// Ids of annotations dropped as exact `(instruction, box)` duplicates.
    pub duplicates: Vec<String>,
}

impl BinaryExpansion {
    pub fn negative_fraction(&self) -> f64 {
        if self.triplets.is_empty() {
            return 0.0;
        }
        let neg = self
            .triplets
            .iter()
            .filter(|t| t.label == Label::Negative)
            .count();
        neg as f64 / self.triplets.len() as f64
    }
}

/// Expands benchmark groups into a binary classification set.
///
/// Triplet ids are `<i>` for positives and `<i>~<m>` for the negative that
/// pairs instruction `i` with annotation `m`'s box.
pub fn expand_benchmark_binary(groups: &[BenchmarkGroup]) -> Result<BinaryExpansion> {
    let mut out = BinaryExpansion::default();
    for g in groups {
        if g.annotations.is_empty() {
            return Err(Error::input(format!(
                "benchmark group {} is empty",
                g.image
            )));
        }
        let dims = ImageDims::new(g.width, g.height)?;
        let mut seen: HashSet<(String, [u64; 4])> = HashSet::new();
        let mut kept: Vec<&BenchmarkAnnotation> = Vec::with_capacity(g.annotations.len());
        for a in &g.annotations {
            let key = (a.instruction.clone(), a.bbox.to_array().map(f64::to_bits));
            if seen.insert(key) {
                kept.push(a);
            } else {
                out.duplicates.push(a.id.clone());
            }
        }
        let triplet =
            |text: &BenchmarkAnnotation, boxed: &BenchmarkAnnotation, neg: bool| RankerTriplet {
                id: if neg {
                    format!("{}~{}", text.id, boxed.id)
                } else {
                    text.id.clone()
                },
                image_ref: g.image.clone(),
                dims,
                text: text.instruction.clone(),
                bbox: boxed.bbox,
                label: if neg {
                    Label::Negative
                } else {
                    Label::Positive
                },
                origin: if neg {
                    Origin::BenchmarkNeg
                } else {
                    Origin::BenchmarkPos
                },
            };
        for (i, a) in kept.iter().enumerate() {
            out.triplets.push(triplet(a, a, false));
            for (m, other) in kept.iter().enumerate() {
                if m != i {
                    out.triplets.push(triplet(a, other, true));
                }
            }
        }
    }
    Ok(out)
}

/// Reads benchmark annotations from JSONL. Rows are either
/// `{image, width, height, annotations}` groups or plain grounding records,
/// decided by the first row.
pub fn load_benchmark_groups(path: impl AsRef<Path>) -> Result<Vec<BenchmarkGroup>> {
    let values: Vec<serde_json::Value> = crate::jsonl::read(path)?;
    let grouped = values
        .first()
        .is_some_and(|v| v.get("annotations").is_some());
    if grouped {
        values
            .into_iter()
            .map(serde_json::from_value)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::input(format!("bad benchmark group row: {e}")))
    } else {
        let records: Vec<GroundingRecord> = values
            .into_iter()
            .map(serde_json::from_value)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::input(format!("bad record row: {e}")))?;
        BenchmarkGroup::from_records(&records)
    }
}

/// Expected triplet count `Σ n + n(n-1)` for deduplicated group sizes.
pub fn expected_binary_count(group_sizes: &[usize]) -> usize {
    group_sizes
        .iter()
        .map(|&n| n + n * n.saturating_sub(1))
        .sum()
}
