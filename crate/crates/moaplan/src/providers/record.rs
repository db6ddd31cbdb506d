use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use moaplan_core::embed::EmbeddingVector;
use moaplan_core::provider::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, ProviderError, VlmProvider, VlmRequest,
};
use serde::Serialize;
use serde_json::Value;

use super::replay::embed_request;
use super::transcript::{load_index, now_ms, request_hash, Kind, TranscriptRecord};

struct Sink {
    file: File,
    seen: HashMap<(Kind, String), Value>,
}

/// Delegates to `inner` and appends each exchange to a transcript that
/// [`super::Replay`] can serve later. Appends are serialized; failed calls
/// are not recorded.
pub struct Recorder<P> {
    inner: P,
    sink: Mutex<Sink>,
}

impl<P> Recorder<P> {
    /// Opens `path` for appending, picking up whatever it already holds.
    pub fn open(inner: P, path: &Path) -> anyhow::Result<Self> {
        let seen = if path.exists() {
            load_index(path)?
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Recorder {
            inner,
            sink: Mutex::new(Sink { file, seen }),
        })
    }

    pub fn into_inner(self) -> P {
        self.inner
    }

    fn record<R: Serialize>(&self, kind: Kind, request: Value, response: &R) -> Result<(), ProviderError> {
        let response = serde_json::to_value(response).map_err(|e| ProviderError::Config(e.to_string()))?;
        let request_hash = request_hash(kind, &request);
        let mut sink = self.sink.lock().unwrap_or_else(|p| p.into_inner());
        match sink.seen.get(&(kind, request_hash.clone())) {
            Some(prev) if *prev == response => return Ok(()),
            // a replay could not tell the two apart
            Some(_) => {
                return Err(ProviderError::Config(format!(
                    "request {request_hash} already recorded with a different response"
                )))
            }
            None => {}
        }
        let rec = TranscriptRecord {
            kind,
            request_hash: request_hash.clone(),
            request,
            response: response.clone(),
            recorded_at_ms: now_ms(),
        };
        let mut line = serde_json::to_string(&rec).map_err(|e| ProviderError::Config(e.to_string()))?;
        line.push('\n');
        sink.file
            .write_all(line.as_bytes())
            .and_then(|_| sink.file.flush())
            .map_err(|e| ProviderError::Config(format!("writing transcript: {e}")))?;
        sink.seen.insert((kind, request_hash), response);
        Ok(())
    }
}

fn to_value(v: &impl Serialize) -> Result<Value, ProviderError> {
    serde_json::to_value(v).map_err(|e| ProviderError::Config(e.to_string()))
}

impl<P: ChatProvider> ChatProvider for Recorder<P> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let response = self.inner.complete(request)?;
        self.record(Kind::Chat, to_value(request)?, &response)?;
        Ok(response)
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for Recorder<P> {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let response = self.inner.embed(texts)?;
        self.record(Kind::Embed, embed_request(texts), &response)?;
        Ok(response)
    }
}

impl<P: VlmProvider> VlmProvider for Recorder<P> {
    fn ask(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        let response = self.inner.ask(request)?;
        self.record(Kind::Vlm, to_value(request)?, &response)?;
        Ok(response)
    }
}
