use std::collections::BTreeSet;
use std::path::Path;

use guicurate::fixtures::{mock_pipeline_config, write_fixture, FixtureFiles};
use guicurate::jsonl;
use guicurate::pipeline::{
    assemble_run, downsample, run_pipeline, PipelineConfig, PipelineManifest, ReviewDecision,
    ReviewVerdict, RunLayout, RunStatus, StageName,
};
use guicurate::record::GroundingRecord;
use guicurate::Error;

fn fixture(n: usize, images: bool) -> (tempfile::TempDir, FixtureFiles) {
    let dir = tempfile::tempdir().unwrap();
    let files = write_fixture(dir.path(), n, 11, images).unwrap();
    (dir, files)
}

fn stage_ids(run_dir: &Path, rel: &str) -> BTreeSet<String> {
    let rows: Vec<GroundingRecord> = jsonl::read(run_dir.join(rel)).unwrap();
    rows.into_iter().map(|r| r.id).collect()
}

#[test]
fn identical_configs_in_different_dirs_agree() {
    let (dir, files) = fixture(200, false);
    let a = run_pipeline(&mock_pipeline_config(&files, &dir.path().join("a"), 5)).unwrap();
    let b = run_pipeline(&mock_pipeline_config(&files, &dir.path().join("b"), 5)).unwrap();
    assert_eq!(a.content_digests(), b.content_digests());
    assert_eq!(a.status, RunStatus::Complete);
    let names: Vec<&str> = a.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "ingest",
            "downsample",
            "difficulty",
            "alignment",
            "diversity",
            "ambiguity",
            "review"
        ]
    );

    let c = run_pipeline(&mock_pipeline_config(&files, &dir.path().join("c"), 6)).unwrap();
    assert_ne!(a.content_digests(), c.content_digests());
}

#[test]
fn every_stage_output_is_a_subset_of_its_input() {
    let (dir, files) = fixture(300, false);
    let run = dir.path().join("run");
    let m = run_pipeline(&mock_pipeline_config(&files, &run, 9)).unwrap();
    let mut upstream: Option<BTreeSet<String>> = None;
    for s in &m.stages {
        let ids = stage_ids(&run, &s.output);
        assert_eq!(ids.len(), s.output_count, "{}", s.name);
        if let Some(up) = &upstream {
            assert_eq!(up.len(), s.input_count, "{}", s.name);
            assert!(ids.is_subset(up), "{} added records", s.name);
        }
        upstream = Some(ids);
    }
    assert!(m.stage("difficulty").unwrap().output_count < 300);
    assert!(m.stage("review").unwrap().output_count > 0);
}

#[test]
fn warm_rerun_reuses_everything_without_requests() {
    let (dir, files) = fixture(200, false);
    let cfg = mock_pipeline_config(&files, &dir.path().join("run"), 3);
    let cold = run_pipeline(&cfg).unwrap();
    assert!(cold.total_requests() > 0);
    let warm = run_pipeline(&cfg).unwrap();
    assert_eq!(warm.total_requests(), 0);
    assert!(warm.stages.iter().all(|s| s.reused));
    assert_eq!(cold.content_digests(), warm.content_digests());
}

#[test]
fn changing_the_ratio_reuses_upstream_stages() {
    let (dir, files) = fixture(200, false);
    let mut cfg = mock_pipeline_config(&files, &dir.path().join("run"), 3);
    let first = run_pipeline(&cfg).unwrap();
    cfg.diversity.ratio = 0.3;
    let second = run_pipeline(&cfg).unwrap();
    for name in ["ingest", "downsample", "difficulty", "alignment"] {
        let s = second.stage(name).unwrap();
        assert!(s.reused, "{name} recomputed");
        assert_eq!(s.requests, 0);
    }
    let d = second.stage("diversity").unwrap();
    assert!(!d.reused);
    // embeddings come from the response cache
    assert_eq!(d.requests, 0);
    assert!(d.output_count > first.stage("diversity").unwrap().output_count);
}

#[test]
fn tampered_stage_output_is_recomputed() {
    let (dir, files) = fixture(100, false);
    let cfg = mock_pipeline_config(&files, &dir.path().join("run"), 3);
    let first = run_pipeline(&cfg).unwrap();
    let out = dir
        .path()
        .join("run")
        .join(&first.stage("alignment").unwrap().output);
    let mut rows: Vec<GroundingRecord> = jsonl::read(&out).unwrap();
    rows.pop();
    jsonl::write(&out, &rows).unwrap();
    let second = run_pipeline(&cfg).unwrap();
    assert!(!second.stage("alignment").unwrap().reused);
    assert_eq!(first.content_digests(), second.content_digests());
}

#[test]
fn any_setting_change_changes_the_run_digest() {
    let (dir, files) = fixture(20, false);
    let base = mock_pipeline_config(&files, &dir.path().join("run"), 3);
    let d0 = guicurate::digest::config_digest(&base);
    let mut variants: Vec<PipelineConfig> = Vec::new();
    let mut v = base.clone();
    v.diversity.ratio = 0.2;
    variants.push(v);
    let mut v = base.clone();
    v.seeds.clustering = 4;
    variants.push(v);
    let mut v = base.clone();
    v.reward.token_limit = 50;
    variants.push(v);
    let mut v = base.clone();
    v.clients.judge.mock.ambiguity_yes = 0.5;
    variants.push(v);
    let mut v = base.clone();
    v.stage_order.swap(2, 3);
    variants.push(v);
    let mut v = base.clone();
    v.traces.check.max_sentences = 3;
    variants.push(v);
    let digests: BTreeSet<String> = variants
        .iter()
        .map(guicurate::digest::config_digest)
        .chain([d0.clone()])
        .collect();
    assert_eq!(digests.len(), variants.len() + 1);
    assert_eq!(guicurate::digest::config_digest(&base.clone()), d0);
}

#[test]
fn failing_stage_is_recorded_in_the_manifest() {
    // no images on disk, so trace generation cannot draw its overlay
    let (dir, files) = fixture(100, false);
    let run = dir.path().join("run");
    let mut cfg = mock_pipeline_config(&files, &run, 3);
    cfg.traces.enabled = true;
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Input(_)), "{err:?}");
    let m = PipelineManifest::load(RunLayout::new(&run).manifest()).unwrap();
    match &m.status {
        RunStatus::Failed { stage, error } => {
            assert_eq!(stage, "traces");
            assert!(!error.is_empty());
        }
        other => panic!("expected failure, got {other:?}"),
    }
    assert_eq!(m.stages.last().unwrap().name, "review");
}

#[test]
fn traces_attach_to_accepted_records() {
    let (dir, files) = fixture(100, true);
    let run = dir.path().join("run");
    let mut cfg = mock_pipeline_config(&files, &run, 3);
    cfg.traces.enabled = true;
    let m = run_pipeline(&cfg).unwrap();
    let t = m.stage("traces").unwrap();
    assert_eq!(t.input_count, m.stage("review").unwrap().output_count);
    let survivors: Vec<GroundingRecord> = jsonl::read(RunLayout::new(&run).survivors()).unwrap();
    let log: Vec<ReviewDecision> = survivors
        .iter()
        .map(|r| ReviewDecision {
            id: r.id.clone(),
            verdict: ReviewVerdict::Accept,
            note: None,
            reviewer: "t".into(),
            ts: chrono::Utc::now(),
        })
        .collect();
    jsonl::write(RunLayout::new(&run).decisions(), &log).unwrap();
    let a = assemble_run(&run).unwrap();
    assert_eq!(a.records.len(), survivors.len());
    assert!(a.records.iter().any(|r| r.trace.is_some()));
    assert!(RunLayout::new(&run).final_dataset().is_file());
}

#[test]
fn stage_order_can_be_overridden() {
    let (dir, files) = fixture(150, false);
    let run = dir.path().join("run");
    let mut cfg = mock_pipeline_config(&files, &run, 3);
    cfg.stage_order = vec![StageName::Diversity, StageName::Difficulty];
    let m = run_pipeline(&cfg).unwrap();
    let names: Vec<&str> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["ingest", "diversity", "difficulty", "review"]);
    assert!(run.join("stages/01_diversity.jsonl").is_file());

    cfg.stage_order = vec![StageName::Review];
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    cfg.stage_order = vec![StageName::Alignment, StageName::Alignment];
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

#[test]
fn toml_round_trip_and_relative_paths() {
    let (dir, files) = fixture(20, false);
    let cfg = mock_pipeline_config(&files, &dir.path().join("run"), 3);
    let text = cfg.to_toml_string().unwrap();
    assert_eq!(
        PipelineConfig::from_toml_str(&text, dir.path()).unwrap(),
        cfg
    );

    let rel = r#"
output_dir = "out"
image_root = "images"
stage_order = ["difficulty"]

[[sources]]
name = "syn"
path = "records.jsonl"
downsample = 0.5

[seeds]
downsample = 1
ranker = 2
clustering = 3
mock = 4

[clients.grounder]
kind = "mock"
[clients.embedder]
kind = "mock"
[clients.ranker]
kind = "mock"
[clients.judge]
kind = "mock"
"#;
    let path = dir.path().join("pipeline.toml");
    std::fs::write(&path, rel).unwrap();
    let loaded = PipelineConfig::load(&path).unwrap();
    assert_eq!(loaded.output_dir, dir.path().join("out"));
    assert_eq!(loaded.sources[0].path, files.records_path);
    assert_eq!(loaded.diversity.ratio, 0.1);

    let missing_seed = rel.replace("mock = 4\n", "");
    std::fs::write(&path, missing_seed).unwrap();
    assert!(matches!(PipelineConfig::load(&path), Err(Error::Config(_))));
    let unknown = rel.replace("downsample = 0.5", "downsample = 0.5\nextra = 1");
    std::fs::write(&path, unknown).unwrap();
    assert!(matches!(PipelineConfig::load(&path), Err(Error::Config(_))));
    let bad_fraction = rel.replace("downsample = 0.5", "downsample = 1.5");
    std::fs::write(&path, bad_fraction).unwrap();
    assert!(matches!(PipelineConfig::load(&path), Err(Error::Config(_))));
}

#[test]
fn downsampling_is_seeded_and_sized() {
    let recs = guicurate::fixtures::synthetic_records(1000, 5, 1);
    let a = downsample(&recs, 0.25, 7).unwrap();
    assert_eq!(a.len(), 250);
    assert_eq!(a, downsample(&recs, 0.25, 7).unwrap());
    assert_ne!(a, downsample(&recs, 0.25, 8).unwrap());
    let mut reversed = recs.clone();
    reversed.reverse();
    assert_eq!(a, downsample(&reversed, 0.25, 7).unwrap());
    assert_eq!(downsample(&recs, 1.0, 7).unwrap().len(), 1000);
    assert!(downsample(&recs, 0.0, 7).is_err());
}

#[test]
fn duplicate_ids_across_sources_are_rejected() {
    let (dir, files) = fixture(30, false);
    let mut cfg = mock_pipeline_config(&files, &dir.path().join("run"), 3);
    let copy = dir.path().join("copy.jsonl");
    std::fs::copy(&files.records_path, &copy).unwrap();
    let mut second = cfg.sources[0].clone();
    second.name = "copy".into();
    second.path = copy;
    cfg.sources.push(second);
    assert!(run_pipeline(&cfg).is_err());
    let m = PipelineManifest::load(RunLayout::new(dir.path().join("run")).manifest()).unwrap();
    assert!(matches!(m.status, RunStatus::Failed { ref stage, .. } if stage == "ingest"));
}
