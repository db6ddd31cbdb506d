//! Fixed-length embedding vectors and the offline hashed bag-of-words
//! embedder.
//!
//! The hashed embedder is a deterministic stand-in for a sentence-embedding
//! model: lowercase, split on non-alphanumerics, FNV-1a each token into one
//! of [`HASHED_DIM`] buckets, count, L2-normalize. It measures token overlap,
//! not meaning.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::provider::{EmbeddingProvider, ProviderError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|v| v * v).sum())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

pub const HASHED_DIM: usize = 256;

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn token_bucket(token: &str, dim: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    (h.finish() % dim as u64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagOfWords {
    dim: usize,
}

impl HashedBagOfWords {
    pub fn new() -> Self {
        HashedBagOfWords { dim: HASHED_DIM }
    }

    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashedBagOfWords { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Unit-norm vector, or all zeros for text with no tokens.
    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0.0f64; self.dim];
        for tok in tokens(text) {
            v[token_bucket(&tok, self.dim)] += 1.0;
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        EmbeddingVector(v)
    }
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        Self::new()
    }
}

impl EmbeddingProvider for HashedBagOfWords {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
