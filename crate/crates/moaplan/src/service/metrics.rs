use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::Json;
use moaplan_core::bt::BehaviorTree;
use moaplan_core::embed::HashedBagOfWords;
use moaplan_core::metrics::EditCosts;
use serde::Deserialize;
use serde_json::Value;

use super::sessions::parse_body;
use super::{ApiError, AppState};
use crate::eval::{compare_report, parse_tree, similarity_report, ted_report, Embedder, EmbedderName};

fn tree(field: &str, xml: &str) -> Result<BehaviorTree, ApiError> {
    parse_tree(xml).map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_tree",
            format!("{field}: {e:#}"),
        )
    })
}

fn costs(c: Option<EditCosts>) -> Result<EditCosts, ApiError> {
    match c {
        None => Ok(EditCosts::unit()),
        Some(c) => EditCosts::new(c.insert, c.delete, c.relabel).map_err(|e| ApiError::invalid(e.to_string())),
    }
}

fn embedder(state: &AppState, name: EmbedderName) -> Embedder {
    match name {
        EmbedderName::Hashed => Embedder::Hashed(HashedBagOfWords::default()),
        EmbedderName::Provider => Embedder::Provider(state.providers.embed.clone()),
    }
}

fn metric_error(e: anyhow::Error) -> ApiError {
    match e.downcast::<moaplan_core::metrics::MetricError>() {
        Ok(moaplan_core::metrics::MetricError::Provider(p)) => p.into(),
        Ok(other) => ApiError::invalid(other.to_string()),
        Err(e) => ApiError::internal(format!("{e:#}")),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TedRequest {
    a: String,
    b: String,
    costs: Option<EditCosts>,
}

pub async fn ted(body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: TedRequest = parse_body(&body)?;
    let report = ted_report(&tree("a", &req.a)?, &tree("b", &req.b)?, &costs(req.costs)?);
    Ok(Json(serde_json::to_value(report).map_err(ApiError::internal)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimRequest {
    source: String,
    target: String,
    #[serde(default)]
    embedder: EmbedderName,
}

pub async fn sim(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: SimRequest = parse_body(&body)?;
    let (s, t) = (tree("source", &req.source)?, tree("target", &req.target)?);
    let emb = embedder(&state, req.embedder);
    let report = tokio::task::spawn_blocking(move || similarity_report(&s, &t, &emb))
        .await
        .map_err(ApiError::internal)?
        .map_err(metric_error)?;
    Ok(Json(serde_json::to_value(report).map_err(ApiError::internal)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareRequest {
    a: String,
    b: String,
    costs: Option<EditCosts>,
    #[serde(default)]
    embedder: EmbedderName,
}

pub async fn compare(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: CompareRequest = parse_body(&body)?;
    let (a, b, c) = (tree("a", &req.a)?, tree("b", &req.b)?, costs(req.costs)?);
    let emb = embedder(&state, req.embedder);
    let report = tokio::task::spawn_blocking(move || compare_report(&a, &b, &c, &emb))
        .await
        .map_err(ApiError::internal)?
        .map_err(metric_error)?;
    Ok(Json(serde_json::to_value(report).map_err(ApiError::internal)?))
}
