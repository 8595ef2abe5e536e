//! Evaluation: grounding accuracy per platform × element-type cell, binary
//! classification metrics for the ranker, and element accuracy.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{center_hit, parse_bbox, point_in_box, BBox, Point};
use crate::record::{ElemType, GroundingRecord, Platform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub platform: Platform,
    pub elem_type: ElemType,
}

impl CellKey {
    /// The six cells in report column order.
    pub const ALL: [CellKey; 6] = [
        CellKey::new(Platform::Mobile, ElemType::Text),
        CellKey::new(Platform::Mobile, ElemType::Icon),
        CellKey::new(Platform::Desktop, ElemType::Text),
        CellKey::new(Platform::Desktop, ElemType::Icon),
        CellKey::new(Platform::Web, ElemType::Text),
        CellKey::new(Platform::Web, ElemType::Icon),
    ];

    pub const fn new(platform: Platform, elem_type: ElemType) -> Self {
        Self {
            platform,
            elem_type,
        }
    }

    fn label(self) -> String {
        let p = match self.platform {
            Platform::Mobile => "Mobile",
            Platform::Desktop => "Desktop",
            Platform::Web => "Web",
        };
        let t = match self.elem_type {
            ElemType::Text => "Text",
            ElemType::Icon => "Icon",
        };
        format!("{p} {t}")
    }
}

/// A model answer: a box (scored by its center) or a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Box(BBox),
    Point(Point),
}

impl Prediction {
    pub fn hits(&self, gt: &BBox) -> bool {
        match self {
            Prediction::Box(b) => center_hit(b, gt),
            Prediction::Point(p) => point_in_box(*p, gt),
        }
    }
}

/// Prediction JSONL row. The first of `bbox`, `point`, `output` that is
/// present decides; `output` is raw model text parsed for a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl PredictionRow {
    pub fn prediction(&self) -> Option<Prediction> {
        if let Some(b) = self.bbox {
            return Some(Prediction::Box(b));
        }
        if let Some(p) = self.point {
            return Some(Prediction::Point(p));
        }
        self.output
            .as_deref()
            .and_then(parse_bbox)
            .map(Prediction::Box)
    }
}

/// Collects rows into an id → prediction map; unparseable rows map to `None`.
pub fn predictions_by_id(rows: &[PredictionRow]) -> HashMap<String, Option<Prediction>> {
    rows.iter()
        .map(|r| (r.id.clone(), r.prediction()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub cell: CellKey,
    pub hits: usize,
    pub total: usize,
    /// `None` for an empty cell.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    /// All six cells in column order, empty ones included.
    pub cells: Vec<CellStats>,
    pub hits: usize,
    pub total: usize,
    pub micro: f64,
    /// Mean over non-empty cells.
    pub macro_accuracy: f64,
    pub empty_cells: Vec<CellKey>,
    /// Gold ids with no usable prediction, scored as misses.
    pub missing: Vec<String>,
    /// Gold ids without an element type, left out of every cell.
    pub untyped: Vec<String>,
}

/// Unweighted mean of the given accuracies; `None` when empty.
pub fn macro_accuracy(cell_accuracies: &[f64]) -> Option<f64> {
    if cell_accuracies.is_empty() {
        return None;
    }
    Some(cell_accuracies.iter().sum::<f64>() / cell_accuracies.len() as f64)
}

impl GroundingReport {
    /// Builds a report from per-cell `(hits, total)` counts. Cells not
    /// listed are empty; repeated cells accumulate.
    pub fn from_counts(counts: impl IntoIterator<Item = (CellKey, usize, usize)>) -> Self {
        let mut acc: BTreeMap<CellKey, (usize, usize)> = BTreeMap::new();
        for (cell, h, t) in counts {
            let e = acc.entry(cell).or_default();
            e.0 += h;
            e.1 += t;
        }
        let cells: Vec<CellStats> = CellKey::ALL
            .iter()
            .map(|&cell| {
                let (hits, total) = acc.get(&cell).copied().unwrap_or((0, 0));
                CellStats {
                    cell,
                    hits,
                    total,
                    accuracy: (total > 0).then(|| hits as f64 / total as f64),
                }
            })
            .collect();
        let hits = cells.iter().map(|c| c.hits).sum();
        let total = cells.iter().map(|c| c.total).sum();
        let accs: Vec<f64> = cells.iter().filter_map(|c| c.accuracy).collect();
        Self {
            micro: if total > 0 {
                hits as f64 / total as f64
            } else {
                0.0
            },
            macro_accuracy: macro_accuracy(&accs).unwrap_or(0.0),
            empty_cells: cells
                .iter()
                .filter(|c| c.total == 0)
                .map(|c| c.cell)
                .collect(),
            cells,
            hits,
            total,
            missing: Vec::new(),
            untyped: Vec::new(),
        }
    }

    /// Aligned plain-text table: one header row of cell names plus Micro
    /// and Macro, one row of percentages. Empty cells print as `-`.
    pub fn to_table(&self, row_label: &str) -> String {
        let mut heads: Vec<String> = vec!["Model".into()];
        heads.extend(self.cells.iter().map(|c| c.cell.label()));
        heads.push("Micro".into());
        heads.push("Macro".into());
        let mut vals: Vec<String> = vec![row_label.into()];
        vals.extend(self.cells.iter().map(|c| match c.accuracy {
            Some(a) => format!("{:.1}", a * 100.0),
            None => "-".into(),
        }));
        vals.push(format!("{:.1}", self.micro * 100.0));
        vals.push(format!("{:.1}", self.macro_accuracy * 100.0));
        let widths: Vec<usize> = heads
            .iter()
            .zip(&vals)
            .map(|(h, v)| h.len().max(v.len()))
            .collect();
        let mut out = String::new();
        for row in [&heads, &vals] {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| {
                    if i == 0 {
                        format!("{s:<w$}")
                    } else {
                        format!("{s:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join(" | ").trim_end());
        }
        out
    }
}

/// Scores predictions against gold records with the center-hit rule.
pub fn grounding_report(
    preds: &HashMap<String, Option<Prediction>>,
    gold: &[GroundingRecord],
) -> GroundingReport {
    let mut counts = Vec::with_capacity(gold.len());
    let mut missing = Vec::new();
    let mut untyped = Vec::new();
    for g in gold {
        let Some(elem_type) = g.elem_type else {
            untyped.push(g.id.clone());
            continue;
        };
        let hit = match preds.get(&g.id).copied().flatten() {
            Some(p) => p.hits(&g.gt_box),
            None => {
                missing.push(g.id.clone());
                false
            }
        };
        counts.push((CellKey::new(g.platform, elem_type), hit as usize, 1));
    }
    let mut report = GroundingReport::from_counts(counts);
    missing.sort();
    untyped.sort();
    report.missing = missing;
    report.untyped = untyped;
    report
}

/// A ratio that may have a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub undefined: bool,
}

impl Rate {
    fn of(num: usize, den: usize) -> Self {
        if den == 0 {
            Rate {
                value: 0.0,
                undefined: true,
            }
        } else {
            Rate {
                value: num as f64 / den as f64,
                undefined: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Rate,
    pub recall: Rate,
    pub f1: Rate,
}

impl ClassMetrics {
    /// Metrics for one class given its own true/false positives and misses.
    fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self {
            precision: Rate::of(tp, tp + fp),
            recall: Rate::of(tp, tp + fn_),
            f1: Rate::of(2 * tp, 2 * tp + fp + fn_),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    /// Positive class (Y).
    pub positive: ClassMetrics,
    /// Negative class (N).
    pub negative: ClassMetrics,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl ClassificationReport {
    /// Report from confusion counts; at least one sample is required.
    pub fn from_confusion(tp: usize, fp: usize, fn_: usize, tn: usize) -> Result<Self> {
        let n = tp + fp + fn_ + tn;
        if n == 0 {
            return Err(Error::input(
                "classification report needs at least one sample",
            ));
        }
        let positive = ClassMetrics::new(tp, fp, fn_);
        // for the negative class, a false negative is a wrongly predicted N
        let negative = ClassMetrics::new(tn, fn_, fp);
        let mean = |a: Rate, b: Rate| (a.value + b.value) / 2.0;
        Ok(Self {
            tp,
            fp,
            fn_,
            tn,
            accuracy: (tp + tn) as f64 / n as f64,
            positive,
            negative,
            macro_precision: mean(positive.precision, negative.precision),
            macro_recall: mean(positive.recall, negative.recall),
            macro_f1: mean(positive.f1, negative.f1),
        })
    }

    pub fn samples(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn to_table(&self) -> String {
        let fmt = |r: Rate| {
            if r.undefined {
                "undef".to_string()
            } else {
                format!("{:.1}", r.value * 100.0)
            }
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>9} {:>9} {:>9}",
            "Class", "Precision", "Recall", "F1"
        );
        for (name, m) in [("Y", self.positive), ("N", self.negative)] {
            let _ = writeln!(
                out,
                "{:<6} {:>9} {:>9} {:>9}",
                name,
                fmt(m.precision),
                fmt(m.recall),
                fmt(m.f1)
            );
        }
        let _ = writeln!(
            out,
            "{:<6} {:>9.1} {:>9.1} {:>9.1}",
            "Macro",
            self.macro_precision * 100.0,
            self.macro_recall * 100.0,
            self.macro_f1 * 100.0
        );
        let _ = writeln!(
            out,
            "Accuracy {:.1}  (TP {} FP {} FN {} TN {})",
            self.accuracy * 100.0,
            self.tp,
            self.fp,
            self.fn_,
            self.tn
        );
        out
    }
}

/// Binary metrics from parallel label and prediction lists; `true` is the
/// positive class.
pub fn classification_report(
    labels: &[bool],
    predictions: &[bool],
) -> Result<ClassificationReport> {
    if labels.len() != predictions.len() {
        return Err(Error::input(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    ClassificationReport::from_confusion(tp, fp, fn_, tn)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementAccuracy {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Gold ids with no predicted point, counted wrong.
    pub missing: Vec<String>,
}

/// Fraction of gold elements whose predicted point lies in the gold box.
pub fn element_accuracy(
    pred_points: &HashMap<String, Point>,
    gold_elements: &BTreeMap<String, BBox>,
) -> ElementAccuracy {
    let mut correct = 0;
    let mut missing = Vec::new();
    for (id, gt) in gold_elements {
        match pred_points.get(id) {
            Some(p) if point_in_box(*p, gt) => correct += 1,
            Some(_) => {}
            None => missing.push(id.clone()),
        }
    }
    let total = gold_elements.len();
    ElementAccuracy {
        accuracy: if total > 0 {
            correct as f64 / total as f64
        } else {
            0.0
        },
        correct,
        total,
        missing,
    }
}
