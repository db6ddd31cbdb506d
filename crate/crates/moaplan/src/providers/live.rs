//! OpenAI-compatible HTTP endpoints for chat, embeddings and vision.

use std::env;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use base64::Engine;
use moaplan_core::embed::EmbeddingVector;
use moaplan_core::provider::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, ImageRef, ProviderError, VlmProvider, VlmRequest,
};
use serde_json::{json, Value};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    pub vlm_model: String,
    pub timeout: Duration,
    pub max_retries: u32,
}

// keeps the key out of logs
impl fmt::Debug for LiveConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("chat_model", &self.chat_model)
            .field("embed_model", &self.embed_model)
            .field("vlm_model", &self.vlm_model)
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl LiveConfig {
    /// Reads `MOAPLAN_BASE_URL`, `MOAPLAN_API_KEY`, `MOAPLAN_CHAT_MODEL`,
    /// `MOAPLAN_EMBED_MODEL`, `MOAPLAN_VLM_MODEL`, `MOAPLAN_TIMEOUT_SECS`
    /// and `MOAPLAN_MAX_RETRIES`. Only the chat model is required.
    pub fn from_env() -> Result<Self, ProviderError> {
        let var = |k: &str| env::var(k).ok().filter(|v| !v.trim().is_empty());
        let chat_model =
            var("MOAPLAN_CHAT_MODEL").ok_or_else(|| ProviderError::Config("MOAPLAN_CHAT_MODEL is not set".into()))?;
        let num = |k: &str, default: u64| -> Result<u64, ProviderError> {
            match var(k) {
                None => Ok(default),
                Some(v) => v
                    .parse()
                    .map_err(|_| ProviderError::Config(format!("{k}={v:?} is not a number"))),
            }
        };
        Ok(LiveConfig {
            base_url: var("MOAPLAN_BASE_URL").unwrap_or_else(|| DEFAULT_BASE_URL.into()),
            api_key: var("MOAPLAN_API_KEY"),
            embed_model: var("MOAPLAN_EMBED_MODEL").unwrap_or_else(|| "text-embedding-3-small".into()),
            vlm_model: var("MOAPLAN_VLM_MODEL").unwrap_or_else(|| chat_model.clone()),
            chat_model,
            timeout: Duration::from_secs(num("MOAPLAN_TIMEOUT_SECS", 60)?),
            max_retries: num("MOAPLAN_MAX_RETRIES", 3)? as u32,
        })
    }
}

pub struct LiveClient {
    config: LiveConfig,
    agent: ureq::Agent,
    /// Embedding width seen first; 0 until then.
    embed_dim: AtomicUsize,
}

enum Attempt {
    Retry(ProviderError),
    Fatal(ProviderError),
}

impl LiveClient {
    pub fn new(config: LiveConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        LiveClient {
            config,
            agent,
            embed_dim: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, Attempt> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| Attempt::Retry(ProviderError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(ProviderError::Transport(e.to_string())))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Attempt::Fatal(ProviderError::Transport(format!("response is not JSON: {e}")))),
            429 => Err(Attempt::Retry(ProviderError::RateLimited { attempts: 0 })),
            500..=599 => Err(Attempt::Retry(ProviderError::Transport(format!("HTTP {status}")))),
            _ => Err(Attempt::Fatal(ProviderError::Transport(format!(
                "HTTP {status}: {}",
                truncate(&text, 300)
            )))),
        }
    }

    /// Retries timeouts, connection errors, 429 and 5xx with exponential
    /// backoff; other statuses fail at once.
    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let mut last = ProviderError::Transport("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = Duration::from_millis(250 << (attempt - 1).min(4));
                tracing::debug!(attempt, ?backoff, "retrying {path}");
                std::thread::sleep(backoff);
            }
            match self.post_once(&url, body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(ProviderError::RateLimited { .. })) => {
                    last = ProviderError::RateLimited { attempts: attempt + 1 };
                }
                Err(Attempt::Retry(e)) => last = e,
            }
        }
        Err(last)
    }

    fn chat(
        &self,
        model: &str,
        content: Value,
        temperature: f64,
        max_tokens: u32,
    ) -> Result<ChatResponse, ProviderError> {
        let body = json!({
            "model": model,
            "messages": [{ "role": "user", "content": content }],
            "temperature": temperature,
            "max_tokens": max_tokens,
        });
        let started = Instant::now();
        let v = self.post("chat/completions", &body)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let choice = &v["choices"][0];
        let text = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| ProviderError::Transport("response has no choices[0].message.content".into()))?;
        let mut resp = ChatResponse::text(text);
        resp.latency_ms = latency_ms;
        for (k, val) in [
            ("model", &v["model"]),
            ("finish_reason", &choice["finish_reason"]),
            ("prompt_tokens", &v["usage"]["prompt_tokens"]),
            ("completion_tokens", &v["usage"]["completion_tokens"]),
        ] {
            match val {
                Value::Null => {}
                Value::String(s) => {
                    resp.metadata.insert(k.into(), s.clone());
                }
                other => {
                    resp.metadata.insert(k.into(), other.to_string());
                }
            }
        }
        Ok(resp)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "image/png",
    }
}

pub fn image_data_url(image: &ImageRef) -> Result<String, ProviderError> {
    match image {
        ImageRef::Base64 { mime, data } => Ok(format!("data:{mime};base64,{data}")),
        ImageRef::Path(p) => {
            let path = Path::new(p);
            let bytes = std::fs::read(path).map_err(|e| ProviderError::Config(format!("reading image {p}: {e}")))?;
            let data = base64::engine::general_purpose::STANDARD.encode(bytes);
            Ok(format!("data:{};base64,{data}", mime_for(path)))
        }
    }
}

impl ChatProvider for LiveClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.chat(
            &self.config.chat_model,
            Value::String(request.prompt.clone()),
            request.temperature,
            request.max_output,
        )
    }
}

impl VlmProvider for LiveClient {
    fn ask(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        let mut content = vec![json!({ "type": "text", "text": request.prompt })];
        for image in &request.images {
            content.push(json!({ "type": "image_url", "image_url": { "url": image_data_url(image)? } }));
        }
        Ok(self.chat(&self.config.vlm_model, Value::Array(content), 0.0, 16)?.text)
    }
}

impl EmbeddingProvider for LiveClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let v = self.post(
            "embeddings",
            &json!({ "model": self.config.embed_model, "input": texts }),
        )?;
        let data = v["data"]
            .as_array()
            .ok_or_else(|| ProviderError::Transport("embedding response has no data array".into()))?;
        let mut rows: Vec<(u64, Vec<f64>)> = Vec::with_capacity(data.len());
        for (i, item) in data.iter().enumerate() {
            let vec: Vec<f64> = serde_json::from_value(item["embedding"].clone())
                .map_err(|e| ProviderError::Transport(format!("embedding {i}: {e}")))?;
            rows.push((item["index"].as_u64().unwrap_or(i as u64), vec));
        }
        if rows.len() != texts.len() {
            return Err(ProviderError::Transport(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                rows.len()
            )));
        }
        rows.sort_by_key(|(i, _)| *i);
        let mut out = Vec::with_capacity(rows.len());
        for (_, row) in rows {
            let got = row.len();
            let expected = match self
                .embed_dim
                .compare_exchange(0, got, Ordering::SeqCst, Ordering::SeqCst)
            {
                Ok(_) => got,
                Err(prev) => prev,
            };
            if got != expected {
                return Err(ProviderError::DimensionDrift { expected, got });
            }
            out.push(EmbeddingVector::new(row));
        }
        Ok(out)
    }
}
