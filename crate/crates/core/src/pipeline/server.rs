//! HTTP API behind the manual review queue.
//!
//! * `GET /api/queue?cursor=&limit=` undecided records after `cursor`, in id order
//! * `GET /api/image/{id}` the screenshot bytes
//! * `POST /api/decision` `{id, verdict, note?, reviewer?}` appends to the log
//! * `GET /api/stats` `{pending, accepted, rejected, total}`
//!
//! When a token is configured every route requires `Authorization: Bearer <token>`.
//! Decisions are appended under one lock, so the log order is the order in
//! which requests were accepted.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{oneshot, Mutex};

use super::review::{load_decisions, ReviewDecision, ReviewVerdict};
use crate::client::{mime_for_path, resolve_image_path};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::jsonl;
use crate::record::GroundingRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewServerConfig {
    pub survivors: PathBuf,
    pub decisions: PathBuf,
    pub image_root: Option<PathBuf>,
    /// Shared bearer token; `None` leaves the API open.
    pub token: Option<String>,
    /// Reviewer name recorded when a request does not supply one.
    pub default_reviewer: String,
}

impl ReviewServerConfig {
    /// Settings for a pipeline run directory.
    pub fn for_run(output_dir: impl Into<PathBuf>, image_root: Option<PathBuf>) -> Self {
        let layout = super::RunLayout::new(output_dir);
        Self {
            survivors: layout.survivors(),
            decisions: layout.decisions(),
            image_root,
            token: None,
            default_reviewer: "reviewer".into(),
        }
    }
}

struct Effective {
    by_id: BTreeMap<String, (DateTime<Utc>, ReviewVerdict)>,
}

impl Effective {
    fn apply(&mut self, d: &ReviewDecision) {
        match self.by_id.get(&d.id) {
            Some((ts, _)) if *ts > d.ts => {}
            _ => {
                self.by_id.insert(d.id.clone(), (d.ts, d.verdict));
            }
        }
    }
}

/// Shared server state.
pub struct ReviewState {
    cfg: ReviewServerConfig,
    records: Vec<GroundingRecord>,
    index: HashMap<String, usize>,
    decisions: Mutex<Effective>,
}

impl ReviewState {
    /// Loads survivors and replays the existing decision log.
    pub fn load(cfg: ReviewServerConfig) -> Result<Self> {
        let mut records: Vec<GroundingRecord> = jsonl::read(&cfg.survivors)?;
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i))
            .collect();
        let mut effective = Effective {
            by_id: BTreeMap::new(),
        };
        for d in load_decisions(&cfg.decisions)? {
            effective.apply(&d);
        }
        if let Some(dir) = cfg.decisions.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Self {
            cfg,
            records,
            index,
            decisions: Mutex::new(effective),
        })
    }

    fn counts(&self, eff: &Effective) -> Stats {
        let (mut accepted, mut rejected) = (0, 0);
        for r in &self.records {
            match eff.by_id.get(&r.id).map(|x| x.1) {
                Some(ReviewVerdict::Accept) => accepted += 1,
                Some(ReviewVerdict::Reject) => rejected += 1,
                None => {}
            }
        }
        Stats {
            pending: self.records.len() - accepted - rejected,
            accepted,
            rejected,
            total: self.records.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub total: usize,
}

/// One queue entry as the review UI consumes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub id: String,
    pub instruction: String,
    pub image_url: String,
    pub gt_box: BBox,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub items: Vec<QueueItem>,
    /// Pass as `cursor` to fetch the next page; absent on the last page.
    pub next_cursor: Option<String>,
    pub pending: usize,
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    cursor: Option<String>,
    limit: Option<usize>,
}

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn authorize(state: &ReviewState, headers: &HeaderMap) -> ApiResult<()> {
    let Some(token) = &state.cfg.token else {
        return Ok(());
    };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(token.as_str()) {
        Ok(())
    } else {
        Err(ApiError(
            StatusCode::UNAUTHORIZED,
            "missing or wrong bearer token".into(),
        ))
    }
}

async fn queue(
    State(state): State<Arc<ReviewState>>,
    headers: HeaderMap,
    Query(q): Query<QueueParams>,
) -> ApiResult<Json<QueuePage>> {
    authorize(&state, &headers)?;
    let limit = q.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    let eff = state.decisions.lock().await;
    let mut undecided = state
        .records
        .iter()
        .filter(|r| q.cursor.as_deref().is_none_or(|c| r.id.as_str() > c))
        .filter(|r| !eff.by_id.contains_key(&r.id));
    let items: Vec<QueueItem> = undecided
        .by_ref()
        .take(limit)
        .map(|r| QueueItem {
            id: r.id.clone(),
            instruction: r.instruction.clone(),
            image_url: format!("/api/image/{}", r.id),
            gt_box: r.gt_box,
            width: r.dims.width,
            height: r.dims.height,
        })
        .collect();
    let next_cursor = match undecided.next() {
        Some(_) => items.last().map(|i| i.id.clone()),
        None => None,
    };
    Ok(Json(QueuePage {
        items,
        next_cursor,
        pending: state.counts(&eff).pending,
    }))
}

async fn image(
    State(state): State<Arc<ReviewState>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    authorize(&state, &headers)?;
    let rec = state
        .index
        .get(&id)
        .map(|&i| &state.records[i])
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown record {id}")))?;
    let path = resolve_image_path(state.cfg.image_root.as_deref(), &rec.image_ref);
    let bytes = tokio::fs::read(&path).await.map_err(|e| {
        ApiError(
            StatusCode::NOT_FOUND,
            format!("image for {id} unavailable: {e}"),
        )
    })?;
    Ok(([(header::CONTENT_TYPE, mime_for_path(&path))], bytes).into_response())
}

async fn decision(
    State(state): State<Arc<ReviewState>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    authorize(&state, &headers)?;
    let invalid = |m: String| ApiError(StatusCode::UNPROCESSABLE_ENTITY, m);
    let v: Value =
        serde_json::from_slice(&body).map_err(|e| invalid(format!("body is not JSON: {e}")))?;
    let id = v
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid("field \"id\" must be a string".into()))?
        .to_string();
    let verdict = v
        .get("verdict")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid("field \"verdict\" must be a string".into()))
        .and_then(|s| ReviewVerdict::parse(s).map_err(|e| invalid(e.to_string())))?;
    let note = match v.get("note") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(invalid("field \"note\" must be a string".into())),
    };
    let reviewer = match v.get("reviewer") {
        None | Some(Value::Null) => state.cfg.default_reviewer.clone(),
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => {
            return Err(invalid(
                "field \"reviewer\" must be a non-empty string".into(),
            ))
        }
    };
    if !state.index.contains_key(&id) {
        return Err(ApiError(
            StatusCode::NOT_FOUND,
            format!("unknown record {id}"),
        ));
    }

    let mut eff = state.decisions.lock().await;
    let d = ReviewDecision {
        id,
        verdict,
        note,
        reviewer,
        ts: Utc::now(),
    };
    jsonl::append(&state.cfg.decisions, &d)
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    eff.apply(&d);
    let pending = state.counts(&eff).pending;
    Ok(Json(
        json!({ "id": d.id, "verdict": d.verdict, "pending": pending }),
    ))
}

async fn stats(
    State(state): State<Arc<ReviewState>>,
    headers: HeaderMap,
) -> ApiResult<Json<Stats>> {
    authorize(&state, &headers)?;
    let eff = state.decisions.lock().await;
    Ok(Json(state.counts(&eff)))
}

pub fn review_router(state: Arc<ReviewState>) -> Router {
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/image/{id}", get(image))
        .route("/api/decision", post(decision))
        .route("/api/stats", get(stats))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve_review(
    cfg: ReviewServerConfig,
    addr: SocketAddr,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<()> {
    let state = Arc::new(ReviewState::load(cfg)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(format!("bind {addr}"), e))?;
    tracing::info!(addr = %listener.local_addr().map_err(|e| Error::io("listener", e))?, "review API listening");
    axum::serve(listener, review_router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::io("review server", e))
}

/// A review server running on its own runtime thread.
pub struct ReviewServerHandle {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ReviewServerHandle {
    /// Loads state, binds `addr` (port 0 picks a free one) and serves in the
    /// background until the handle is stopped or dropped.
    pub fn start(cfg: ReviewServerConfig, addr: SocketAddr) -> Result<Self> {
        let state = Arc::new(ReviewState::load(cfg)?);
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| Error::io("tokio runtime", e))?;
        let listener = rt
            .block_on(tokio::net::TcpListener::bind(addr))
            .map_err(|e| Error::io(format!("bind {addr}"), e))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::io("listener", e))?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let _ = axum::serve(listener, review_router(state))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Self {
            addr,
            stop: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ReviewServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
