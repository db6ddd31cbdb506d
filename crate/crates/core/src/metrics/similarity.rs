use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::bt::BehaviorTree;
use crate::embed::EmbeddingVector;
use crate::provider::EmbeddingProvider;

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, MetricError> {
    if u.dim() != v.dim() {
        return Err(MetricError::DimensionMismatch(u.dim(), v.dim()));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    let dot: f64 = u.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMatch {
    pub source: String,
    pub best_target: String,
    pub cosine: f64,
}

/// Directional node similarity: source tree nodes matched against target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    pub source_id: String,
    pub target_id: String,
    pub per_node: Vec<NodeMatch>,
    pub mean_max: f64,
}

/// For each row, the column with the highest cosine (first on ties), and
/// the population mean of those maxima.
pub fn mean_max(
    source: &[EmbeddingVector],
    target: &[EmbeddingVector],
) -> Result<(Vec<(usize, f64)>, f64), MetricError> {
    let mut rows = Vec::with_capacity(source.len());
    for u in source {
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in target.iter().enumerate() {
            let c = cosine(u, v)?;
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((j, c));
            }
        }
        rows.push(best.ok_or(MetricError::EmbeddingCount { expected: 1, got: 0 })?);
    }
    let mean = rows.iter().map(|(_, c)| c).sum::<f64>() / rows.len() as f64;
    Ok((rows, mean))
}

/// Embeds every node sentence of both trees in a single batch, then takes the
/// mean over source nodes of each node's best cosine against the target.
pub fn semantic_similarity(
    source: &BehaviorTree,
    target: &BehaviorTree,
    embedder: &dyn EmbeddingProvider,
) -> Result<SimilarityResult, MetricError> {
    let src = source.node_sentences();
    let tgt = target.node_sentences();
    let mut batch = src.clone();
    batch.extend(tgt.iter().cloned());

    let vectors = embedder.embed(&batch)?;
    if vectors.len() != batch.len() {
        return Err(MetricError::EmbeddingCount {
            expected: batch.len(),
            got: vectors.len(),
        });
    }
    let (sv, tv) = vectors.split_at(src.len());
    let (rows, mean) = mean_max(sv, tv)?;

    let per_node = rows
        .into_iter()
        .zip(src)
        .map(|((j, c), sentence)| NodeMatch {
            source: sentence,
            best_target: tgt[j].clone(),
            cosine: c,
        })
        .collect();

    Ok(SimilarityResult {
        source_id: source.tree_id.clone(),
        target_id: target.tree_id.clone(),
        per_node,
        mean_max: mean,
    })
}
