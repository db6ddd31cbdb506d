//! Replays the stored response when a state-changing request is retried
//! with the same `Idempotency-Key`.

use std::collections::HashMap;
use std::future::Future;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tokio::sync::OnceCell;

use super::ApiError;

pub const HEADER: &str = "idempotency-key";
pub const REPLAYED: &str = "idempotent-replayed";

#[derive(Debug, Clone)]
struct Stored {
    fingerprint: String,
    status: StatusCode,
    body: Value,
}

/// (request scope, idempotency key)
type Scoped = (String, String);

#[derive(Default)]
pub struct Cache {
    entries: Mutex<HashMap<Scoped, Arc<OnceCell<Stored>>>>,
}

pub type Outcome = Result<(StatusCode, Value), ApiError>;

impl Cache {
    /// Runs `op` once per (scope, key). Server errors are not stored, so a
    /// retry after one runs the operation again. Reusing a key for a
    /// different request body is rejected.
    pub async fn run<F, Fut>(&self, headers: &HeaderMap, scope: String, body: &[u8], op: F) -> Response
    where
        F: FnOnce() -> Fut,
        Fut: Future<Output = Outcome>,
    {
        let Some(key) = headers.get(HEADER).and_then(|v| v.to_str().ok()).map(str::to_string) else {
            return respond(op().await);
        };
        let fingerprint = hex::encode(Sha256::digest(body));
        let cell = self.entries.lock().unwrap().entry((scope, key)).or_default().clone();

        let ran = AtomicBool::new(false);
        let failure: Mutex<Option<ApiError>> = Mutex::new(None);
        let stored = cell
            .get_or_try_init(|| async {
                ran.store(true, Ordering::SeqCst);
                match op().await {
                    Ok((status, body)) => Ok(Stored {
                        fingerprint: fingerprint.clone(),
                        status,
                        body,
                    }),
                    Err(e) if e.status.is_client_error() => Ok(Stored {
                        fingerprint: fingerprint.clone(),
                        status: e.status,
                        body: e.to_body(),
                    }),
                    Err(e) => {
                        *failure.lock().unwrap() = Some(e);
                        Err(())
                    }
                }
            })
            .await;
        match stored {
            Err(()) => match failure.into_inner().unwrap() {
                Some(e) => e.into_response(),
                None => ApiError::internal("idempotent operation failed").into_response(),
            },
            Ok(s) if s.fingerprint != fingerprint => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "idempotency_conflict",
                "idempotency key was already used with a different request",
            )
            .into_response(),
            Ok(s) => {
                let mut resp = (s.status, Json(s.body.clone())).into_response();
                if !ran.load(Ordering::SeqCst) {
                    resp.headers_mut().insert(REPLAYED, HeaderValue::from_static("true"));
                }
                resp
            }
        }
    }
}

fn respond(outcome: Outcome) -> Response {
    match outcome {
        Ok((status, body)) => (status, Json(body)).into_response(),
        Err(e) => e.into_response(),
    }
}
