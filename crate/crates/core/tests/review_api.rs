use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::Path;

use guicurate::fixtures::write_fixture;
use guicurate::jsonl;
use guicurate::pipeline::server::{QueuePage, ReviewServerConfig, ReviewServerHandle, Stats};
use guicurate::pipeline::{assemble_run, load_decisions, RunLayout};
use guicurate::record::GroundingRecord;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

struct Run {
    _dir: tempfile::TempDir,
    root: std::path::PathBuf,
    image_root: std::path::PathBuf,
    records: Vec<GroundingRecord>,
}

/// A run directory whose review stage published `n` survivors.
fn run_dir(n: usize) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let files = write_fixture(dir.path(), n, 21, true).unwrap();
    let root = dir.path().join("run");
    jsonl::write(RunLayout::new(&root).survivors(), &files.records).unwrap();
    Run {
        root,
        image_root: files.image_root,
        records: files.records,
        _dir: dir,
    }
}

fn start(run: &Run, token: Option<&str>) -> ReviewServerHandle {
    let mut cfg = ReviewServerConfig::for_run(&run.root, Some(run.image_root.clone()));
    cfg.token = token.map(str::to_string);
    ReviewServerHandle::start(cfg, SocketAddr::from(([127, 0, 0, 1], 0))).unwrap()
}

fn post(http: &Client, base: &str, body: Value) -> (StatusCode, Value) {
    let r = http
        .post(format!("{base}/api/decision"))
        .json(&body)
        .send()
        .unwrap();
    let status = r.status();
    (status, r.json().unwrap_or(Value::Null))
}

fn queue(http: &Client, url: &str) -> QueuePage {
    http.get(url).send().unwrap().json().unwrap()
}

fn log_lines(root: &Path) -> usize {
    match std::fs::read_to_string(RunLayout::new(root).decisions()) {
        Ok(s) => s.lines().count(),
        Err(_) => 0,
    }
}

#[test]
fn decided_records_leave_the_queue() {
    let run = run_dir(10);
    let server = start(&run, None);
    let base = server.base_url();
    let http = Client::new();

    let page = queue(&http, &format!("{base}/api/queue"));
    assert_eq!(page.items.len(), 10);
    assert_eq!(page.pending, 10);
    let first = page.items[0].clone();
    assert_eq!(first.image_url, format!("/api/image/{}", first.id));

    let (status, body) = post(&http, &base, json!({"id": first.id, "verdict": "accept"}));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["pending"], 9);
    let (_, _) = post(
        &http,
        &base,
        json!({"id": page.items[1].id, "verdict": "reject", "note": "off target"}),
    );

    let page = queue(&http, &format!("{base}/api/queue"));
    let ids: BTreeSet<&str> = page.items.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids.len(), 8);
    assert!(!ids.contains(first.id.as_str()));
    let stats: Stats = http
        .get(format!("{base}/api/stats"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(
        (stats.accepted, stats.rejected, stats.pending, stats.total),
        (1, 1, 8, 10)
    );
}

#[test]
fn invalid_decisions_leave_the_log_untouched() {
    let run = run_dir(5);
    let server = start(&run, None);
    let base = server.base_url();
    let http = Client::new();
    let id = &run.records[0].id;

    for body in [
        json!({"id": id, "verdict": "maybe"}),
        json!({"id": id}),
        json!({"verdict": "accept"}),
        json!({"id": id, "verdict": "accept", "note": 3}),
        json!({"id": id, "verdict": "accept", "reviewer": ""}),
    ] {
        let (status, err) = post(&http, &base, body);
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        assert!(err["error"].is_string());
    }
    let raw = http
        .post(format!("{base}/api/decision"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .unwrap();
    assert_eq!(raw.status(), StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(log_lines(&run.root), 0);

    let (status, _) = post(&http, &base, json!({"id": "nope", "verdict": "accept"}));
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(log_lines(&run.root), 0);
    assert_eq!(
        http.get(format!("{base}/api/image/nope"))
            .send()
            .unwrap()
            .status(),
        StatusCode::NOT_FOUND
    );
}

#[test]
fn images_are_served_with_their_type() {
    let run = run_dir(3);
    let server = start(&run, None);
    let http = Client::new();
    let r = http
        .get(format!(
            "{}/api/image/{}",
            server.base_url(),
            run.records[0].id
        ))
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.headers()["content-type"], "image/png");
    let bytes = r.bytes().unwrap();
    let img = image::load_from_memory(&bytes).unwrap();
    assert_eq!(
        (img.width(), img.height()),
        (run.records[0].dims.width, run.records[0].dims.height)
    );
}

#[test]
fn token_guards_every_route() {
    let run = run_dir(3);
    let server = start(&run, Some("t0ken"));
    let base = server.base_url();
    let http = Client::new();
    let id = &run.records[0].id;
    let open = [
        http.get(format!("{base}/api/queue")),
        http.get(format!("{base}/api/stats")),
        http.get(format!("{base}/api/image/{id}")),
        http.post(format!("{base}/api/decision"))
            .json(&json!({"id": id, "verdict": "accept"})),
    ];
    for req in open {
        let (c, req) = req.build_split();
        let req = req.unwrap();
        let mut wrong = req.try_clone().unwrap();
        assert_eq!(c.execute(req).unwrap().status(), StatusCode::UNAUTHORIZED);
        wrong
            .headers_mut()
            .insert("authorization", "Bearer other".parse().unwrap());
        assert_eq!(c.execute(wrong).unwrap().status(), StatusCode::UNAUTHORIZED);
    }
    assert_eq!(log_lines(&run.root), 0);
    let ok = http
        .get(format!("{base}/api/stats"))
        .bearer_auth("t0ken")
        .send()
        .unwrap();
    assert_eq!(ok.status(), StatusCode::OK);
}

#[test]
fn pagination_walks_every_pending_record_once() {
    let run = run_dir(23);
    let server = start(&run, None);
    let base = server.base_url();
    let http = Client::new();
    post(
        &http,
        &base,
        json!({"id": run.records[4].id, "verdict": "accept"}),
    );

    let mut seen = Vec::new();
    let mut url = format!("{base}/api/queue?limit=5");
    loop {
        let page = queue(&http, &url);
        assert!(page.items.len() <= 5);
        seen.extend(page.items.into_iter().map(|i| i.id));
        match page.next_cursor {
            Some(c) => url = format!("{base}/api/queue?limit=5&cursor={c}"),
            None => break,
        }
    }
    let mut want: Vec<String> = run.records.iter().map(|r| r.id.clone()).collect();
    want.remove(4);
    assert_eq!(seen, want);
}

#[test]
fn concurrent_decisions_all_land_in_the_log() {
    let run = run_dir(40);
    let server = start(&run, None);
    let base = server.base_url();
    std::thread::scope(|s| {
        for chunk in run.records.chunks(10) {
            let base = base.clone();
            s.spawn(move || {
                let http = Client::new();
                for r in chunk {
                    let (status, _) = post(
                        &http,
                        &base,
                        json!({"id": r.id, "verdict": "accept", "reviewer": "c"}),
                    );
                    assert_eq!(status, StatusCode::OK);
                }
            });
        }
    });
    let log = load_decisions(RunLayout::new(&run.root).decisions()).unwrap();
    assert_eq!(log.len(), 40);
    let ids: BTreeSet<&str> = log.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids.len(), 40);
}

#[test]
fn replaying_the_log_reproduces_the_assembly() {
    let run = run_dir(12);
    let server = start(&run, None);
    let base = server.base_url();
    let http = Client::new();
    for (i, r) in run.records.iter().enumerate().take(10) {
        let verdict = if i % 3 == 0 { "reject" } else { "accept" };
        post(&http, &base, json!({"id": r.id, "verdict": verdict}));
    }
    // a change of mind: the later decision wins
    post(
        &http,
        &base,
        json!({"id": run.records[0].id, "verdict": "accept"}),
    );
    server.stop();

    let a = assemble_run(&run.root).unwrap();
    assert_eq!(a.records.len(), 7);
    assert_eq!(a.rejected.len(), 3);
    assert_eq!(a.pending.len(), 2);
    let first = std::fs::read(RunLayout::new(&run.root).final_dataset()).unwrap();

    // a restarted server sees the same state
    let server = start(&run, None);
    let stats: Stats = Client::new()
        .get(format!("{}/api/stats", server.base_url()))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!((stats.accepted, stats.rejected, stats.pending), (7, 3, 2));
    server.stop();

    let b = assemble_run(&run.root).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        first,
        std::fs::read(RunLayout::new(&run.root).final_dataset()).unwrap()
    );
}
