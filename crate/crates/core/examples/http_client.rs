//! The HTTP backend against a local stand-in for a chat-completions
//! server. The fake answers every grounding prompt with a fixed box in
//! model-input coordinates; the client maps it back to the screenshot.

use std::net::SocketAddr;

use axum::routing::post;
use axum::{Json, Router};
use guicurate::client::{ClientConfig, JudgeKind, ModelClient};
use guicurate::fixtures::write_fixture;
use serde_json::{json, Value};

async fn chat(Json(body): Json<Value>) -> Json<Value> {
    let prompt = body["messages"][0]["content"][1]["text"]
        .as_str()
        .unwrap_or_default();
    let answer = if prompt.contains("Answer yes or no") {
        "Yes."
    } else {
        "<answer>[100, 100, 160, 130]</answer>"
    };
    Json(json!({"choices": [{"message": {"content": answer}}]}))
}

fn main() -> guicurate::Result<()> {
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let listener = rt
        .block_on(tokio::net::TcpListener::bind(SocketAddr::from((
            [127, 0, 0, 1],
            0,
        ))))
        .expect("bind");
    let addr = listener.local_addr().expect("addr");
    rt.spawn(async move {
        let app = Router::new().route("/v1/chat/completions", post(chat));
        axum::serve(listener, app).await.unwrap();
    });

    let dir = std::env::temp_dir().join("guicurate-http-example");
    let files = write_fixture(&dir, 5, 1, true)?;
    let cfg = ClientConfig {
        endpoint: format!("http://{addr}"),
        image_root: Some(files.image_root.clone()),
        ..ClientConfig::mock("served-model")
    };
    let client = ModelClient::http(cfg)?;
    for r in &files.records {
        let g = client.ground(r)?;
        let verdict = client.binary_judge(JudgeKind::Alignment, r, &r.gt_box)?;
        println!(
            "{} {}x{} -> model {}x{}: {:?}, alignment {verdict:?}",
            r.id,
            r.dims.width,
            r.dims.height,
            g.model_dims.width,
            g.model_dims.height,
            g.parsed_box.map(|b| b.to_string())
        );
    }
    println!("requests issued: {}", client.requests());
    Ok(())
}
