use std::convert::Infallible;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::Response;
use axum::Json;
use futures::Stream;
use moaplan_core::exec::{
    bind_policies, simulate, simulate_traced, BindingTable, ExecError, ExecutablePlan, SimProfile, SimStats,
    TickStatus, TraceEvent, VlmConditions,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::watch;

use super::sessions::parse_body;
use super::{ApiError, AppState};
use crate::eval::parse_tree;
use crate::runner::{run_streaming, HttpPolicyRuntime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Named(String),
    Inline(SimProfile),
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExecutionMode {
    Simulate {
        profile: ProfileRef,
        #[serde(default)]
        seed: u64,
        #[serde(default = "one")]
        runs: u64,
    },
    Live,
}

/// Exactly one of `session_id` (a converged session) or `tree_xml`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionRequest {
    pub session_id: Option<String>,
    pub tree_xml: Option<String>,
    /// Defaults to the configured bindings.
    pub bindings: Option<BindingTable>,
    pub mode: ExecutionMode,
    pub max_ticks: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    /// Result of the streamed run.
    pub status: TickStatus,
    /// Number of trace records before this one.
    pub events: usize,
    /// For simulations: statistics over all requested runs.
    pub stats: Option<SimStats>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Record {
    Trace(TraceEvent),
    Terminal(Terminal),
}

impl Record {
    fn event_name(&self) -> &'static str {
        match self {
            Record::Trace(_) => "trace",
            Record::Terminal(_) => "terminal",
        }
    }
}

/// One writer appends; every subscriber reads the whole log from its own
/// cursor, so late subscribers miss nothing.
pub struct Execution {
    pub id: String,
    pub tree_id: String,
    log: Mutex<Vec<Record>>,
    len: watch::Sender<usize>,
}

impl Execution {
    fn push(&self, rec: Record) {
        let mut log = self.log.lock().unwrap();
        log.push(rec);
        self.len.send_replace(log.len());
    }

    fn get(&self, i: usize) -> Option<Record> {
        self.log.lock().unwrap().get(i).cloned()
    }

    fn terminal(&self) -> Option<Terminal> {
        match self.log.lock().unwrap().last() {
            Some(Record::Terminal(t)) => Some(t.clone()),
            _ => None,
        }
    }

    fn summary(&self) -> serde_json::Value {
        let terminal = self.terminal();
        json!({
            "execution_id": self.id,
            "tree_id": self.tree_id,
            "state": if terminal.is_some() { "finished" } else { "running" },
            "records": self.log.lock().unwrap().len(),
            "terminal": terminal,
            "events": format!("/executions/{}/events", self.id),
        })
    }
}

enum Job {
    Simulate { profile: SimProfile, seed: u64, runs: u64 },
    Live { policy_url: String, max_ticks: u32 },
}

fn prepare(state: &AppState, req: ExecutionRequest) -> Result<(ExecutablePlan, Job), ApiError> {
    let tree = match (req.session_id, req.tree_xml) {
        (Some(id), None) => {
            if !state.store.exists(&id) {
                return Err(ApiError::not_found("session", &id));
            }
            let session = state.store.load(&id).map_err(ApiError::internal)?.session;
            session.finalize()?
        }
        (None, Some(xml)) => parse_tree(&xml)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_tree", format!("{e:#}")))?,
        _ => return Err(ApiError::invalid("give exactly one of session_id and tree_xml")),
    };
    let bindings = req.bindings.as_ref().unwrap_or(&state.config.bindings);
    let plan = bind_policies(&tree, bindings)?;
    let job =
        match req.mode {
            ExecutionMode::Simulate { profile, seed, runs } => {
                let profile = match profile {
                    ProfileRef::Named(name) => state
                        .config
                        .profiles
                        .get(&name)
                        .cloned()
                        .ok_or_else(|| ApiError::invalid(format!("no simulation profile {name:?}")))?,
                    ProfileRef::Inline(p) => p,
                };
                if runs == 0 {
                    return Err(ExecError::ZeroBudget("runs").into());
                }
                profile.check()?;
                let missing: Vec<String> = plan
                    .external_actions()
                    .filter(|a| !profile.actions.contains_key(*a))
                    .map(String::from)
                    .collect();
                if !missing.is_empty() {
                    return Err(ExecError::MissingProfile(missing).into());
                }
                Job::Simulate { profile, seed, runs }
            }
            ExecutionMode::Live => {
                let policy_url =
                    state.config.exec.policy_url.clone().ok_or_else(|| {
                        ApiError::invalid("live execution needs exec.policy_url in the configuration")
                    })?;
                let max_ticks = req.max_ticks.unwrap_or(state.config.exec.max_ticks);
                if max_ticks == 0 {
                    return Err(ExecError::ZeroBudget("max_ticks").into());
                }
                Job::Live { policy_url, max_ticks }
            }
        };
    Ok((plan, job))
}

fn run_job(state: &AppState, exec: &Execution, plan: &ExecutablePlan, job: Job) {
    let terminal = match job {
        Job::Simulate { profile, seed, runs } => match simulate_traced(plan, &profile, seed) {
            Ok((status, trace, first)) => {
                let events = trace.events.len();
                for e in trace.events {
                    exec.push(Record::Trace(e));
                }
                let stats = if runs == 1 {
                    Ok(first)
                } else {
                    simulate(plan, &profile, seed, runs)
                };
                match stats {
                    Ok(stats) => Terminal {
                        status,
                        events,
                        stats: Some(stats),
                        error: None,
                    },
                    Err(e) => Terminal {
                        status,
                        events,
                        stats: None,
                        error: Some(e.to_string()),
                    },
                }
            }
            Err(e) => Terminal {
                status: TickStatus::Failure,
                events: 0,
                stats: None,
                error: Some(e.to_string()),
            },
        },
        Job::Live { policy_url, max_ticks } => {
            let timeout = Duration::from_secs(state.config.exec.policy_timeout_secs);
            let mut runtime = HttpPolicyRuntime::new(policy_url, state.config.exec.camera_url.clone(), timeout);
            let mut conditions = VlmConditions {
                vlm: &*state.providers.vlm,
            };
            let mut events = 0;
            let result = run_streaming(plan, &mut runtime, &mut conditions, max_ticks, &mut |batch| {
                events += batch.len();
                for e in batch {
                    exec.push(Record::Trace(e));
                }
            });
            match result {
                Ok(status) => Terminal {
                    status,
                    events,
                    stats: None,
                    error: None,
                },
                Err(e) => Terminal {
                    status: TickStatus::Failure,
                    events,
                    stats: None,
                    error: Some(e.to_string()),
                },
            }
        }
    };
    exec.push(Record::Terminal(terminal));
}

pub async fn start(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let st = state.clone();
    state
        .idempotency
        .run(&headers, "POST /executions".into(), &body.clone(), || async move {
            let req: ExecutionRequest = parse_body(&body)?;
            let st2 = st.clone();
            let (plan, job) = tokio::task::spawn_blocking(move || prepare(&st2, req))
                .await
                .map_err(ApiError::internal)??;
            let exec = Arc::new(Execution {
                id: uuid::Uuid::new_v4().to_string(),
                tree_id: plan.tree.tree_id.clone(),
                log: Mutex::default(),
                len: watch::channel(0).0,
            });
            st.executions.lock().unwrap().insert(exec.id.clone(), exec.clone());
            let body = exec.summary();
            let worker = exec.clone();
            tokio::task::spawn_blocking(move || run_job(&st, &worker, &plan, job));
            Ok((StatusCode::ACCEPTED, body))
        })
        .await
}

fn find(state: &AppState, id: &str) -> Result<Arc<Execution>, ApiError> {
    state
        .executions
        .lock()
        .unwrap()
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("execution", id))
}

pub async fn list(State(state): State<Arc<AppState>>) -> Json<Vec<serde_json::Value>> {
    let mut all: Vec<Arc<Execution>> = state.executions.lock().unwrap().values().cloned().collect();
    all.sort_by(|a, b| a.id.cmp(&b.id));
    Json(all.iter().map(|e| e.summary()).collect())
}

pub async fn get(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    Ok(Json(find(&state, &id)?.summary()))
}

/// Record `i` has SSE id `i`. A `Last-Event-ID` header resumes after it.
pub async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let exec = find(&state, &id)?;
    let start = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<usize>().ok())
        .map_or(0, |i| i + 1);
    let rx = exec.len.subscribe();
    let stream = futures::stream::unfold((exec, rx, start, false), |(exec, mut rx, cursor, done)| async move {
        if done {
            return None;
        }
        loop {
            if let Some(rec) = exec.get(cursor) {
                let last = matches!(rec, Record::Terminal(_));
                let data = serde_json::to_string(&rec).expect("records serialize");
                let event = Event::default()
                    .id(cursor.to_string())
                    .event(rec.event_name())
                    .data(data);
                return Some((Ok(event), (exec, rx, cursor + 1, last)));
            }
            if exec.terminal().is_some() {
                return None;
            }
            // the sender lives in `exec`, so this only waits for new records
            if rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
