//! Manual review round-trip: run the pipeline, serve the review API, post
//! decisions over HTTP and assemble the final dataset.

use std::net::SocketAddr;

use guicurate::fixtures::{mock_pipeline_config, write_fixture};
use guicurate::pipeline::server::{QueuePage, ReviewServerConfig, ReviewServerHandle};
use guicurate::pipeline::{assemble_run, run_pipeline};
use serde_json::json;

fn main() -> guicurate::Result<()> {
    let dir = std::env::temp_dir().join("guicurate-review-example");
    let _ = std::fs::remove_dir_all(&dir);
    let files = write_fixture(&dir, 150, 77, true)?;
    let mut cfg = mock_pipeline_config(&files, &dir.join("run"), 77);
    cfg.traces.enabled = true;
    run_pipeline(&cfg)?;

    let server_cfg = ReviewServerConfig::for_run(&cfg.output_dir, cfg.image_root.clone());
    let server = ReviewServerHandle::start(server_cfg, SocketAddr::from(([127, 0, 0, 1], 0)))?;
    let base = server.base_url();
    println!("review API at {base}");

    let http = reqwest::blocking::Client::new();
    let page: QueuePage = http
        .get(format!("{base}/api/queue?limit=100"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    println!("{} items pending", page.pending);
    let img = http
        .get(format!("{base}{}", page.items[0].image_url))
        .send()
        .unwrap();
    let mime = img.headers()["content-type"].to_str().unwrap().to_string();
    println!("first image: {mime} ({} bytes)", img.bytes().unwrap().len());

    for (i, item) in page.items.iter().enumerate() {
        let verdict = if i % 4 == 3 { "reject" } else { "accept" };
        let resp: serde_json::Value = http
            .post(format!("{base}/api/decision"))
            .json(&json!({"id": item.id, "verdict": verdict, "reviewer": "demo"}))
            .send()
            .unwrap()
            .json()
            .unwrap();
        println!("{} {verdict:<6} pending now {}", item.id, resp["pending"]);
    }
    let bad = http
        .post(format!("{base}/api/decision"))
        .json(&json!({"id": page.items[0].id, "verdict": "maybe"}))
        .send()
        .unwrap();
    println!("verdict \"maybe\" -> HTTP {}", bad.status());
    let stats: serde_json::Value = http
        .get(format!("{base}/api/stats"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    println!("stats {stats}");
    server.stop();

    let a = assemble_run(&cfg.output_dir)?;
    println!(
        "final {} (with trace {}), rejected {}, pending {}",
        a.records.len(),
        a.records.iter().filter(|r| r.trace.is_some()).count(),
        a.rejected.len(),
        a.pending.len()
    );
    Ok(())
}
