//! Dataset record types and their JSONL schema.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, ImageDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "AriaUI-Desktop")]
    AriaUiDesktop,
    #[serde(rename = "AriaUI-Mobile")]
    AriaUiMobile,
    #[serde(rename = "AriaUI-Web")]
    AriaUiWeb,
    #[serde(rename = "ShowUI-Desktop")]
    ShowUiDesktop,
    #[serde(rename = "other")]
    Other,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::AriaUiDesktop,
        Source::AriaUiMobile,
        Source::AriaUiWeb,
        Source::ShowUiDesktop,
        Source::Other,
    ];

    pub fn is_aria(self) -> bool {
        matches!(
            self,
            Source::AriaUiDesktop | Source::AriaUiMobile | Source::AriaUiWeb
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::AriaUiDesktop => "AriaUI-Desktop",
            Source::AriaUiMobile => "AriaUI-Mobile",
            Source::AriaUiWeb => "AriaUI-Web",
            Source::ShowUiDesktop => "ShowUI-Desktop",
            Source::Other => "other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Mobile,
    Desktop,
    Web,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElemType {
    Text,
    Icon,
}

/// One (screenshot, instruction, ground-truth box) instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordRow", into = "RecordRow")]
pub struct GroundingRecord {
    pub id: String,
    pub image_ref: String,
    pub dims: ImageDims,
    pub instruction: String,
    pub gt_box: BBox,
    pub source: Source,
    pub platform: Platform,
    pub elem_type: Option<ElemType>,
}

impl GroundingRecord {
    /// Checks the record-level invariants (box inside the image).
    pub fn validate(&self) -> Result<()> {
        ImageDims::new(self.dims.width, self.dims.height)?;
        if !self.gt_box.fits_within(self.dims) {
            return Err(Error::input(format!(
                "record {}: box {} outside {}x{} image",
                self.id, self.gt_box, self.dims.width, self.dims.height
            )));
        }
        if self.id.is_empty() {
            return Err(Error::input("record with empty id"));
        }
        Ok(())
    }
}

/// Wire layout: `{id, image, width, height, instruction, bbox, source, platform, elem_type?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordRow {
    id: String,
    image: String,
    width: u32,
    height: u32,
    instruction: String,
    bbox: BBox,
    source: Source,
    platform: Platform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    elem_type: Option<ElemType>,
}

impl TryFrom<RecordRow> for GroundingRecord {
    type Error = Error;

    fn try_from(r: RecordRow) -> Result<Self> {
        let rec = GroundingRecord {
            dims: ImageDims::new(r.width, r.height)?,
            id: r.id,
            image_ref: r.image,
            instruction: r.instruction,
            gt_box: r.bbox,
            source: r.source,
            platform: r.platform,
            elem_type: r.elem_type,
        };
        rec.validate()?;
        Ok(rec)
    }
}

impl From<GroundingRecord> for RecordRow {
    fn from(r: GroundingRecord) -> Self {
        RecordRow {
            id: r.id,
            image: r.image_ref,
            width: r.dims.width,
            height: r.dims.height,
            instruction: r.instruction,
            bbox: r.gt_box,
            source: r.source,
            platform: r.platform,
            elem_type: r.elem_type,
        }
    }
}

/// Rejects datasets with duplicate ids.
pub fn ensure_unique_ids(records: &[GroundingRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::input(format!("duplicate record id {}", r.id)));
        }
    }
    Ok(())
}

/// Sorts records by id in place.
pub fn sort_by_id(records: &mut [GroundingRecord]) {
    records.sort_by(|a, b| a.id.cmp(&b.id));
}
