use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use moaplan_core::moa::{Answer, ChainStrategy};
use moaplan_core::planner::{Planner, PlannerError, PlanningSession, SessionStatus};
use moaplan_core::xml::serialize_bt;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ApiError, AppState};
use crate::fanout::ThreadedFanOut;
use crate::store::Loaded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub instruction: String,
    pub status: SessionStatus,
    pub turns: usize,
    pub pending_questions: usize,
    pub proxy_rate: f64,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

fn ms(t: Option<SystemTime>) -> u64 {
    t.and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_millis() as u64)
}

impl SessionSummary {
    pub fn of(loaded: &Loaded) -> Self {
        let s = &loaded.session;
        SessionSummary {
            session_id: s.session_id.clone(),
            instruction: s.instruction.clone(),
            status: s.status,
            turns: s.turns.len(),
            pending_questions: s.pending_questions().len(),
            proxy_rate: s.proxy_rate(),
            created_at_ms: ms(loaded.created),
            updated_at_ms: ms(loaded.updated),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAnalysis {
    pub agent_id: String,
    pub analysis: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingQuestion {
    pub label: String,
    pub text: String,
    pub origin_turn: u32,
    /// Why each consulted agent left the question open, in chain order.
    pub analyses: Vec<AgentAnalysis>,
}

pub(super) fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("request body: {e}")))
}

fn value(v: impl Serialize) -> Result<Value, ApiError> {
    serde_json::to_value(v).map_err(ApiError::internal)
}

fn load(state: &AppState, id: &str) -> Result<Loaded, ApiError> {
    if !state.store.exists(id) {
        return Err(ApiError::not_found("session", id));
    }
    state.store.load(id).map_err(ApiError::internal)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlannerPatch {
    max_turns: Option<u32>,
    temperature: Option<f64>,
    moa_enabled: Option<bool>,
    strategy: Option<ChainStrategy>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    instruction: String,
    #[serde(default)]
    config: PlannerPatch,
}

pub async fn create(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let st = state.clone();
    state
        .idempotency
        .run(&headers, "POST /sessions".into(), &body.clone(), || async move {
            let req: CreateRequest = parse_body(&body)?;
            let mut config = st.config.planner.clone();
            let p = req.config;
            config.max_turns = p.max_turns.unwrap_or(config.max_turns);
            config.temperature = p.temperature.unwrap_or(config.temperature);
            config.moa_enabled = p.moa_enabled.unwrap_or(config.moa_enabled);
            config.strategy = p.strategy.unwrap_or(config.strategy);
            let id = uuid::Uuid::new_v4().to_string();
            let mut session = PlanningSession::start(id.clone(), &req.instruction, config)?;
            blocking(move || {
                st.store.persist(&mut session).map_err(ApiError::internal)?;
                Ok((StatusCode::CREATED, value(SessionSummary::of(&load(&st, &id)?))?))
            })
            .await
        })
        .await
}

pub async fn list(State(state): State<Arc<AppState>>) -> Result<Json<Vec<SessionSummary>>, ApiError> {
    blocking(move || {
        let ids = state.store.list().map_err(ApiError::internal)?;
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            match state.store.load(&id) {
                Ok(l) => out.push(SessionSummary::of(&l)),
                Err(e) => tracing::warn!(session = id, "skipping unreadable session: {e:#}"),
            }
        }
        Ok(Json(out))
    })
    .await
}

pub async fn get(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    blocking(move || {
        let l = load(&state, &id)?;
        Ok(Json(json!({ "summary": SessionSummary::of(&l), "session": l.session })))
    })
    .await
}

pub async fn advance(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let st = state.clone();
    let scope = format!("POST /sessions/{id}/advance");
    state
        .idempotency
        .run(&headers, scope, &body.clone(), || async move {
            let lock = st.session_lock(&id);
            let _guard = lock.lock().await;
            blocking(move || {
                let mut session = load(&st, &id)?.session;
                let chat = st.providers.chat.clone();
                let threaded = ThreadedFanOut::new(chat.clone());
                let mut planner = Planner::new(&*chat, st.registry.as_ref());
                if session.config.strategy == ChainStrategy::FanOutAggregate {
                    planner = planner.with_fan_out(&threaded);
                }
                let result = planner.advance(&mut session);
                // an aborted turn still leaves events to keep
                st.store.persist(&mut session).map_err(ApiError::internal)?;
                if let Err(e) = result {
                    let aborted = session.status == SessionStatus::Aborted;
                    let mut err = ApiError::from(e);
                    if aborted {
                        err = err.with_details(json!({
                            "session_id": id,
                            "status": session.status,
                            "transcript": format!("/sessions/{id}"),
                        }));
                    }
                    return Err(err);
                }
                Ok((StatusCode::OK, value(SessionSummary::of(&load(&st, &id)?))?))
            })
            .await
        })
        .await
}

fn pending_of(session: &PlanningSession) -> Vec<PendingQuestion> {
    let Some(turn) = session.last_turn() else {
        return Vec::new();
    };
    session
        .pending_questions()
        .iter()
        .map(|q| PendingQuestion {
            label: q.label.clone(),
            text: q.text.clone(),
            origin_turn: q.origin_turn,
            analyses: turn
                .verdicts
                .iter()
                .filter_map(|v| {
                    v.get(&q.label).map(|lv| AgentAnalysis {
                        agent_id: v.agent_id.clone(),
                        analysis: lv.analysis.clone(),
                    })
                })
                .collect(),
        })
        .collect()
}

pub async fn pending(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    blocking(move || {
        let s = load(&state, &id)?.session;
        Ok(Json(json!({
            "session_id": s.session_id,
            "status": s.status,
            "questions": pending_of(&s),
        })))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerItem {
    label: String,
    text: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswersRequest {
    answers: Vec<AnswerItem>,
}

pub async fn answers(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let st = state.clone();
    let scope = format!("POST /sessions/{id}/answers");
    state
        .idempotency
        .run(&headers, scope, &body.clone(), || async move {
            let req: AnswersRequest = parse_body(&body)?;
            let lock = st.session_lock(&id);
            let _guard = lock.lock().await;
            blocking(move || {
                let mut session = load(&st, &id)?.session;
                let answers = req
                    .answers
                    .into_iter()
                    .map(|a| Answer::human(a.label, a.text))
                    .collect();
                session.submit_human_answers(answers)?;
                st.store.persist(&mut session).map_err(ApiError::internal)?;
                Ok((StatusCode::OK, value(SessionSummary::of(&load(&st, &id)?))?))
            })
            .await
        })
        .await
}

fn final_tree(state: &AppState, id: &str) -> Result<moaplan_core::bt::BehaviorTree, ApiError> {
    let session = load(state, id)?.session;
    session.finalize().map_err(|e: PlannerError| e.into())
}

pub async fn finalize(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let st = state.clone();
    let scope = format!("POST /sessions/{id}/finalize");
    state
        .idempotency
        .run(&headers, scope, &body.clone(), || async move {
            blocking(move || {
                let tree = final_tree(&st, &id)?;
                Ok((
                    StatusCode::OK,
                    json!({
                        "session_id": id,
                        "tree_id": tree.tree_id,
                        "node_count": tree.node_count(),
                        "tree_xml": serialize_bt(&tree),
                        "download": format!("/sessions/{id}/tree"),
                    }),
                ))
            })
            .await
        })
        .await
}

pub async fn tree(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    blocking(move || {
        let tree = final_tree(&state, &id)?;
        let disposition = format!("attachment; filename=\"{id}.bt.xml\"");
        Ok((
            [
                (header::CONTENT_TYPE, "application/xml; charset=utf-8".to_string()),
                (header::CONTENT_DISPOSITION, disposition),
            ],
            serialize_bt(&tree),
        )
            .into_response())
    })
    .await
}
