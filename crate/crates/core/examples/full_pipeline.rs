//! End-to-end curation of a 500-record synthetic fixture with mock models,
//! then a second run showing that every stage is reused.

use guicurate::fixtures::{mock_pipeline_config, write_fixture};
use guicurate::pipeline::run_pipeline;

fn main() -> guicurate::Result<()> {
    let dir = std::env::temp_dir().join("guicurate-pipeline-example");
    let _ = std::fs::remove_dir_all(&dir);
    let files = write_fixture(&dir, 500, 2024, false)?;
    let cfg = mock_pipeline_config(&files, &dir.join("run"), 2024);

    let first = run_pipeline(&cfg)?;
    for s in &first.stages {
        println!(
            "{:<11} {:>4} -> {:<4} requests {:<4} digest {}",
            s.name,
            s.input_count,
            s.output_count,
            s.requests,
            &s.content_digest[..12]
        );
    }
    let second = run_pipeline(&cfg)?;
    assert_eq!(first.content_digests(), second.content_digests());
    println!("re-run issued {} requests", second.total_requests());

    let mut wider = cfg.clone();
    wider.diversity.ratio = 0.2;
    let third = run_pipeline(&wider)?;
    let d = third.stage("difficulty").unwrap();
    println!(
        "ratio 0.2: difficulty reused = {}, diversity kept {}",
        d.reused,
        third.stage("diversity").unwrap().output_count
    );
    println!("outputs in {}", dir.display());
    Ok(())
}
