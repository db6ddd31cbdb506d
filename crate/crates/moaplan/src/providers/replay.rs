use std::collections::HashMap;
use std::path::Path;

use moaplan_core::embed::EmbeddingVector;
use moaplan_core::provider::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, ProviderError, VlmProvider, VlmRequest,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use super::transcript::{load_index, request_hash, Kind, TranscriptError};

/// Answers every request from a recorded transcript; never touches the
/// network. Read-only after construction, so safe to share across threads.
#[derive(Debug, Clone)]
pub struct Replay {
    index: HashMap<(Kind, String), Value>,
}

impl Replay {
    pub fn open(path: &Path) -> Result<Self, TranscriptError> {
        Ok(Replay {
            index: load_index(path)?,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    fn lookup<T: DeserializeOwned>(&self, kind: Kind, request: &impl Serialize) -> Result<T, ProviderError> {
        let request = serde_json::to_value(request).map_err(|e| ProviderError::Config(e.to_string()))?;
        let hash = request_hash(kind, &request);
        let response = self
            .index
            .get(&(kind, hash.clone()))
            .ok_or(ProviderError::ReplayMiss { hash })?;
        serde_json::from_value(response.clone()).map_err(|e| ProviderError::Config(format!("recorded response: {e}")))
    }
}

pub(crate) fn embed_request(texts: &[String]) -> Value {
    json!({ "texts": texts })
}

impl ChatProvider for Replay {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.lookup(Kind::Chat, request)
    }
}

impl EmbeddingProvider for Replay {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        self.lookup(Kind::Embed, &embed_request(texts))
    }
}

impl VlmProvider for Replay {
    fn ask(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        self.lookup(Kind::Vlm, request)
    }
}
