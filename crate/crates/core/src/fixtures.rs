//! Seeded synthetic GUI-grounding data for tests, examples and demos.
//!
//! Records come in screenshot groups of a few annotations each, spread
//! over the four AriaUI/ShowUI sources. Optionally a PNG is rendered per
//! screenshot with every annotated element drawn as a filled rectangle.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::Rng;

use crate::digest::keyed_rng;
use crate::error::{Error, Result};
use crate::geometry::{BBox, ImageDims};
use crate::jsonl;
use crate::pipeline::{
    ClientBinding, Clients, PipelineConfig, Seeds, SourceSpec, StageName, TraceSettings,
};
use crate::record::{ElemType, GroundingRecord, Platform, Source};

const VERBS: [&str; 6] = ["Click", "Open", "Select", "Tap", "Toggle", "Press"];
const COLORS: [&str; 5] = ["blue", "grey", "green", "red", "white"];
const WIDGETS: [&str; 7] = [
    "button",
    "tab",
    "menu item",
    "icon",
    "link",
    "checkbox",
    "field",
];
const WORDS: [&str; 12] = [
    "Settings",
    "Save",
    "Export",
    "Profile",
    "Search",
    "Cart",
    "Help",
    "Downloads",
    "Share",
    "Print",
    "Filters",
    "History",
];

const SOURCES: [(Source, Platform, u32, u32); 4] = [
    (Source::AriaUiWeb, Platform::Web, 1280, 720),
    (Source::AriaUiMobile, Platform::Mobile, 720, 1280),
    (Source::AriaUiDesktop, Platform::Desktop, 1440, 900),
    (Source::ShowUiDesktop, Platform::Desktop, 1920, 1080),
];

/// `n` records, `per_image` annotations per screenshot (the last group may
/// be smaller). Ids are `syn-00000` style and sort in generation order.
pub fn synthetic_records(n: usize, per_image: usize, seed: u64) -> Vec<GroundingRecord> {
    let per_image = per_image.max(1);
    let mut out = Vec::with_capacity(n);
    let mut prev: Option<BBox> = None;
    for k in 0..n {
        let img = k / per_image;
        let (source, platform, w, h) = SOURCES[img % SOURCES.len()];
        let mut rng = keyed_rng(seed, &[b"fixture", &(k as u64).to_le_bytes()]);
        let same_image_as_prev = k % per_image != 0;
        let gt_box = match prev {
            // an occasional duplicate box inside a screenshot group
            Some(b) if same_image_as_prev && rng.random_bool(0.05) => b,
            _ => {
                let bw = rng.random_range(24.0..220.0f64).round();
                let bh = rng.random_range(18.0..90.0f64).round();
                let x1 = rng.random_range(0.0..(w as f64 - bw)).round();
                let y1 = rng.random_range(0.0..(h as f64 - bh)).round();
                BBox::new(x1, y1, x1 + bw, y1 + bh).expect("generated box is valid")
            }
        };
        prev = Some(gt_box);
        let instruction = format!(
            "{} the {} {} labelled '{}'",
            VERBS[rng.random_range(0..VERBS.len())],
            COLORS[rng.random_range(0..COLORS.len())],
            WIDGETS[rng.random_range(0..WIDGETS.len())],
            WORDS[rng.random_range(0..WORDS.len())],
        );
        out.push(GroundingRecord {
            id: format!("syn-{k:05}"),
            image_ref: format!("img_{img:04}.png"),
            dims: ImageDims {
                width: w,
                height: h,
            },
            instruction,
            gt_box,
            source,
            platform,
            elem_type: Some(if rng.random_bool(0.5) {
                ElemType::Text
            } else {
                ElemType::Icon
            }),
        });
    }
    out
}

/// Renders one PNG per distinct screenshot into `image_dir`.
pub fn render_images(records: &[GroundingRecord], image_dir: &Path, seed: u64) -> Result<()> {
    std::fs::create_dir_all(image_dir).map_err(|e| Error::io(image_dir, e))?;
    let mut groups: std::collections::BTreeMap<&str, Vec<&GroundingRecord>> = Default::default();
    for r in records {
        groups.entry(r.image_ref.as_str()).or_default().push(r);
    }
    for (name, members) in groups {
        let dims = members[0].dims;
        let mut rng = keyed_rng(seed, &[b"pixels", name.as_bytes()]);
        let shade = rng.random_range(225..=245u8);
        let mut img = RgbImage::from_pixel(dims.width, dims.height, Rgb([shade, shade, shade]));
        for r in members {
            let fill = Rgb([
                rng.random_range(40..200u8),
                rng.random_range(40..200u8),
                rng.random_range(40..200u8),
            ]);
            let b = r.gt_box;
            for y in b.y1() as u32..(b.y2() as u32).min(dims.height) {
                for x in b.x1() as u32..(b.x2() as u32).min(dims.width) {
                    img.put_pixel(x, y, fill);
                }
            }
        }
        img.save(image_dir.join(name))?;
    }
    Ok(())
}

/// Paths of a fixture written to disk.
#[derive(Debug, Clone)]
pub struct FixtureFiles {
    pub records_path: PathBuf,
    pub image_root: PathBuf,
    pub records: Vec<GroundingRecord>,
}

/// Writes `records.jsonl` (and images when asked) under `dir`.
pub fn write_fixture(dir: &Path, n: usize, seed: u64, with_images: bool) -> Result<FixtureFiles> {
    let records = synthetic_records(n, 5, seed);
    let records_path = dir.join("records.jsonl");
    jsonl::write(&records_path, &records)?;
    let image_root = dir.join("images");
    std::fs::create_dir_all(&image_root).map_err(|e| Error::io(&image_root, e))?;
    if with_images {
        render_images(&records, &image_root, seed)?;
    }
    Ok(FixtureFiles {
        records_path,
        image_root,
        records,
    })
}

/// All-mock pipeline config over a written fixture.
pub fn mock_pipeline_config(files: &FixtureFiles, output_dir: &Path, seed: u64) -> PipelineConfig {
    PipelineConfig {
        output_dir: output_dir.to_path_buf(),
        sources: vec![SourceSpec {
            name: "synthetic".into(),
            path: files.records_path.clone(),
            downsample: None,
            cluster: true,
        }],
        seeds: Seeds::all(seed),
        clients: Clients {
            tracer: Some(ClientBinding::mock()),
            ..Clients::all_mock()
        },
        image_root: Some(files.image_root.clone()),
        eligibility: Default::default(),
        diversity: Default::default(),
        reward: Default::default(),
        traces: TraceSettings::default(),
        stage_order: StageName::DEFAULT_ORDER.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_are_valid_and_deterministic() {
        let a = synthetic_records(40, 5, 3);
        assert_eq!(a, synthetic_records(40, 5, 3));
        assert_ne!(a, synthetic_records(40, 5, 4));
        for r in &a {
            r.validate().unwrap();
        }
        assert_eq!(
            a.iter().filter(|r| r.image_ref == "img_0000.png").count(),
            5
        );
    }
}
