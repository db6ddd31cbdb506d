//! Model-service contracts: chat completion, sentence embedding, and
//! visual yes/no judgment. Implementations live outside this crate except
//! for the deterministic fallback embedder in [`crate::embed`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingVector;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("no recorded response for request {hash}")]
    ReplayMiss { hash: String },
    #[error("embedding dimension drifted from {expected} to {got}")]
    DimensionDrift { expected: usize, got: usize },
    #[error("could not read a yes/no verdict from {0:?}")]
    VerdictUnparseable(String),
    #[error("provider misconfigured: {0}")]
    Config(String),
    #[error("scripted provider: {0}")]
    Scripted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output: u32,
}

impl ChatRequest {
    pub const DEFAULT_MAX_OUTPUT: u32 = 4096;

    pub fn new(prompt: impl Into<String>, temperature: f64) -> Self {
        ChatRequest {
            prompt: prompt.into(),
            temperature,
            max_output: Self::DEFAULT_MAX_OUTPUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default)]
    pub latency_ms: u64,
}

impl ChatResponse {
    pub fn text(text: impl Into<String>) -> Self {
        ChatResponse {
            text: text.into(),
            metadata: BTreeMap::new(),
            latency_ms: 0,
        }
    }
}

pub trait ChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for &P {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(request)
    }
}

pub trait EmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed(texts)
    }
}

/// Opaque image handle passed through to a VLM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    Path(String),
    Base64 { mime: String, data: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlmRequest {
    pub prompt: String,
    pub images: Vec<ImageRef>,
}

pub trait VlmProvider {
    /// Returns the model's raw reply.
    fn ask(&self, request: &VlmRequest) -> Result<String, ProviderError>;
}

impl<P: VlmProvider + ?Sized> VlmProvider for &P {
    fn ask(&self, request: &VlmRequest) -> Result<String, ProviderError> {
        (**self).ask(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub achieved: bool,
    pub raw: String,
}

pub fn judgment_prompt(condition: &str) -> String {
    format!("Given the before/after images, has {condition} been achieved? Answer yes or no.")
}

/// Reads the leading yes/no token, ignoring case and trailing punctuation.
pub fn parse_verdict(raw: &str) -> Result<bool, ProviderError> {
    let first = raw
        .split(|c: char| !c.is_alphanumeric())
        .find(|tok| !tok.is_empty())
        .unwrap_or("");
    if first.eq_ignore_ascii_case("yes") {
        Ok(true)
    } else if first.eq_ignore_ascii_case("no") {
        Ok(false)
    } else {
        Err(ProviderError::VerdictUnparseable(raw.to_string()))
    }
}

pub fn vlm_judge(vlm: &dyn VlmProvider, condition: &str, images: Vec<ImageRef>) -> Result<Verdict, ProviderError> {
    let request = VlmRequest {
        prompt: judgment_prompt(condition),
        images,
    };
    let raw = vlm.ask(&request)?;
    let achieved = parse_verdict(&raw)?;
    Ok(Verdict { achieved, raw })
}
