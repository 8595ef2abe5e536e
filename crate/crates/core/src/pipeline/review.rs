use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::record::GroundingRecord;
use crate::trace::TraceRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewVerdict {
    Accept,
    Reject,
}

impl ReviewVerdict {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "accept" => Ok(Self::Accept),
            "reject" => Ok(Self::Reject),
            other => Err(Error::input(format!(
                "verdict must be \"accept\" or \"reject\", got {other:?}"
            ))),
        }
    }
}

/// One row of the append-only decision log `{id, verdict, note?, reviewer, ts}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub id: String,
    pub verdict: ReviewVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub reviewer: String,
    pub ts: DateTime<Utc>,
}

/// Reads a decision log; a missing file is an empty log.
pub fn load_decisions(path: impl AsRef<Path>) -> Result<Vec<ReviewDecision>> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(Vec::new());
    }
    jsonl::read(path)
}

/// The effective decision per id: latest timestamp wins, later log rows
/// win ties.
pub fn effective_decisions(log: &[ReviewDecision]) -> BTreeMap<String, ReviewDecision> {
    let mut out: BTreeMap<String, ReviewDecision> = BTreeMap::new();
    for d in log {
        match out.get(&d.id) {
            Some(prev) if prev.ts > d.ts => {}
            _ => {
                out.insert(d.id.clone(), d.clone());
            }
        }
    }
    out
}

/// A released record with its trace when a clean one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    #[serde(flatten)]
    pub record: GroundingRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinalAssembly {
    /// Accepted survivors in id order.
    pub records: Vec<FinalRecord>,
    pub rejected: Vec<String>,
    pub pending: Vec<String>,
    /// Decision ids that match no survivor; ignored.
    pub unknown: Vec<String>,
}

/// Survivors carrying an accept decision, with clean traces attached.
pub fn assemble_final(
    survivors: &[GroundingRecord],
    decisions: &[ReviewDecision],
    traces: Option<&[TraceRow]>,
) -> FinalAssembly {
    let effective = effective_decisions(decisions);
    let known: BTreeSet<&str> = survivors.iter().map(|r| r.id.as_str()).collect();
    let trace_of: HashMap<&str, &TraceRow> = traces
        .unwrap_or_default()
        .iter()
        .filter(|t| t.is_clean())
        .map(|t| (t.id.as_str(), t))
        .collect();

    let mut sorted: Vec<&GroundingRecord> = survivors.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = FinalAssembly::default();
    for r in sorted {
        match effective.get(&r.id).map(|d| d.verdict) {
            Some(ReviewVerdict::Accept) => out.records.push(FinalRecord {
                record: r.clone(),
                trace: trace_of.get(r.id.as_str()).map(|t| t.trace.clone()),
            }),
            Some(ReviewVerdict::Reject) => out.rejected.push(r.id.clone()),
            None => out.pending.push(r.id.clone()),
        }
    }
    out.unknown = effective
        .keys()
        .filter(|id| !known.contains(id.as_str()))
        .cloned()
        .collect();
    out
}
