use std::path::PathBuf;
use std::time::Duration;

use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{
    mime_for_path, resolve_image_path, with_retries, Attempt, Backend, ClientConfig, ImagePayload,
    JudgeKind,
};
use crate::error::{Error, Result};
use crate::geometry::{BBox, ImageDims};
use crate::record::GroundingRecord;

/// Chat-completions style backend.
///
/// Requests are `{"model", "messages": [{"role": "user", "content": [image
/// part, text part]}], "temperature": 0}` with the image inlined as a base64
/// data URL. The completion text is read from `text_pointer`; embedding
/// requests post the same message body to `embed_path` and read the vector
/// from `embedding_pointer`.
#[derive(Debug)]
pub struct HttpBackend {
    client: Client,
    base: String,
    model: String,
    chat_path: String,
    embed_path: String,
    text_pointer: String,
    embedding_pointer: String,
    image_root: Option<PathBuf>,
    token: Option<String>,
    retry_limit: u32,
}

impl HttpBackend {
    pub fn new(config: &ClientConfig) -> Result<Self> {
        config.validate()?;
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let token = match &config.auth_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| Error::Config(format!("auth token variable {var} is not set")))?,
            ),
            None => None,
        };
        Ok(Self {
            client,
            base: config.endpoint.trim_end_matches('/').to_string(),
            model: config.model.clone(),
            chat_path: config.chat_path.clone(),
            embed_path: config.embed_path.clone(),
            text_pointer: config.text_pointer.clone(),
            embedding_pointer: config.embedding_pointer.clone(),
            image_root: config.image_root.clone(),
            token,
            retry_limit: config.retry_limit,
        })
    }

    fn load_image(&self, record: &GroundingRecord) -> Result<ImagePayload> {
        let path = resolve_image_path(self.image_root.as_deref(), &record.image_ref);
        let bytes = std::fs::read(&path).map_err(|e| {
            Error::input(format!(
                "record {}: cannot read image {}: {e}",
                record.id,
                path.display()
            ))
        })?;
        Ok(ImagePayload {
            mime: mime_for_path(&path).to_string(),
            bytes,
        })
    }

    fn body(&self, prompt: &str, image: Option<&ImagePayload>) -> Value {
        let mut content = Vec::new();
        if let Some(img) = image {
            let b64 = base64::engine::general_purpose::STANDARD.encode(&img.bytes);
            content.push(json!({
                "type": "image_url",
                "image_url": { "url": format!("data:{};base64,{b64}", img.mime) }
            }));
        }
        content.push(json!({ "type": "text", "text": prompt }));
        json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": content }],
            "temperature": 0
        })
    }

    /// POSTs with bounded retries and returns the parsed JSON body.
    fn post(&self, id: &str, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}{}", self.base, path);
        let (res, attempts) = with_retries(self.retry_limit, |_| {
            let mut req = self.client.post(&url).json(body);
            if let Some(t) = &self.token {
                req = req.bearer_auth(t);
            }
            let resp = req
                .send()
                .map_err(|e| Attempt::Retry(format!("transport: {e}")))?;
            let status = resp.status();
            let text = resp
                .text()
                .map_err(|e| Attempt::Retry(format!("reading body: {e}")))?;
            if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
                return Err(Attempt::Retry(format!("HTTP {status}")));
            }
            if !status.is_success() {
                return Err(Attempt::Fatal(format!(
                    "HTTP {status}: {}",
                    truncate(&text)
                )));
            }
            serde_json::from_str::<Value>(&text)
                .map_err(|e| Attempt::Fatal(format!("malformed body ({e}): {}", truncate(&text))))
        });
        res.map_err(|message| Error::Request {
            id: id.to_string(),
            attempts,
            message,
        })
    }

    fn chat(&self, id: &str, prompt: &str, image: Option<&ImagePayload>) -> Result<String> {
        let body = self.body(prompt, image);
        let resp = self.post(id, &self.chat_path, &body)?;
        match resp.pointer(&self.text_pointer) {
            Some(Value::String(s)) => Ok(s.clone()),
            _ => Err(Error::Request {
                id: id.to_string(),
                attempts: 1,
                message: format!("malformed body: no text at {}", self.text_pointer),
            }),
        }
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl Backend for HttpBackend {
    fn ground_raw(
        &self,
        record: &GroundingRecord,
        _model_dims: ImageDims,
        prompt: &str,
    ) -> Result<String> {
        let image = self.load_image(record)?;
        self.chat(&record.id, prompt, Some(&image))
    }

    fn embed_raw(&self, record: &GroundingRecord) -> Result<Vec<f64>> {
        let image = self.load_image(record)?;
        let body = self.body(&record.instruction, Some(&image));
        let resp = self.post(&record.id, &self.embed_path, &body)?;
        let arr = resp
            .pointer(&self.embedding_pointer)
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Request {
                id: record.id.clone(),
                attempts: 1,
                message: format!("malformed body: no vector at {}", self.embedding_pointer),
            })?;
        arr.iter()
            .map(|v| {
                v.as_f64().ok_or_else(|| Error::Request {
                    id: record.id.clone(),
                    attempts: 1,
                    message: "malformed body: non-numeric embedding entry".into(),
                })
            })
            .collect()
    }

    fn judge_raw(
        &self,
        _kind: JudgeKind,
        record: &GroundingRecord,
        _bbox: &BBox,
        prompt: &str,
    ) -> Result<String> {
        let image = self.load_image(record)?;
        self.chat(&record.id, prompt, Some(&image))
    }

    fn complete_raw(&self, prompt: &str, image: Option<&ImagePayload>) -> Result<String> {
        self.chat("completion", prompt, image)
    }
}
