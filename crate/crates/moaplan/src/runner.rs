//! Live execution: a policy-server runtime and a tick loop that hands
//! trace events out as they happen.

use std::io::Write;
use std::time::Duration;

use base64::Engine;
use moaplan_core::exec::{
    ActionCall, ActionRuntime, ConditionEvaluator, ExecError, ExecutablePlan, Executor, TickStatus, TraceEvent,
};
use moaplan_core::provider::{ImageRef, ProviderError};
use serde::Deserialize;
use serde_json::json;

/// Sends actions to a policy server.
///
/// `POST {base}/act` with `{action, policy_id, prompt, resumed}` answers
/// `{"status": "success" | "failure" | "running"}`. When a camera URL is
/// set, `GET` on it returns the current frame as an image body.
pub struct HttpPolicyRuntime {
    agent: ureq::Agent,
    base_url: String,
    camera_url: Option<String>,
}

#[derive(Deserialize)]
struct ActReply {
    status: TickStatus,
}

impl HttpPolicyRuntime {
    pub fn new(base_url: impl Into<String>, camera_url: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpPolicyRuntime {
            agent,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            camera_url,
        }
    }
}

impl ActionRuntime for HttpPolicyRuntime {
    fn invoke(&mut self, call: &ActionCall<'_>) -> Result<TickStatus, ProviderError> {
        let body = json!({
            "action": call.action,
            "policy_id": call.binding.policy_id,
            "prompt": call.binding.prompt,
            "resumed": call.resumed,
        });
        let mut resp = self
            .agent
            .post(&format!("{}/act", self.base_url))
            .header("Content-Type", "application/json")
            .send(body.to_string())
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ProviderError::Transport(format!(
                "policy server returned HTTP {status}"
            )));
        }
        let reply: ActReply =
            serde_json::from_str(&text).map_err(|e| ProviderError::Transport(format!("policy reply: {e}")))?;
        Ok(reply.status)
    }

    fn wait(&mut self, seconds: f64) -> Result<TickStatus, ProviderError> {
        std::thread::sleep(Duration::from_secs_f64(seconds));
        Ok(TickStatus::Success)
    }

    fn capture(&mut self) -> Option<ImageRef> {
        let url = self.camera_url.as_ref()?;
        let mut resp = match self.agent.get(url).call() {
            Ok(r) if r.status().is_success() => r,
            Ok(r) => {
                tracing::warn!(status = r.status().as_u16(), "camera frame unavailable");
                return None;
            }
            Err(e) => {
                tracing::warn!("camera frame unavailable: {e}");
                return None;
            }
        };
        let mime = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .unwrap_or("image/png")
            .to_string();
        let bytes = resp.body_mut().read_to_vec().ok()?;
        Some(ImageRef::Base64 {
            mime,
            data: base64::engine::general_purpose::STANDARD.encode(bytes),
        })
    }
}

/// Ticks to completion like the core runner, passing each tick's events to
/// `sink` before the next tick starts.
pub fn run_streaming(
    plan: &ExecutablePlan,
    runtime: &mut dyn ActionRuntime,
    evaluator: &mut dyn ConditionEvaluator,
    max_ticks: u32,
    sink: &mut dyn FnMut(Vec<TraceEvent>),
) -> Result<TickStatus, ExecError> {
    if max_ticks == 0 {
        return Err(ExecError::ZeroBudget("max_ticks"));
    }
    let mut exec = Executor::new(plan);
    loop {
        let status = exec.tick(runtime, evaluator);
        sink(exec.drain_events());
        if status != TickStatus::Running {
            return Ok(status);
        }
        if exec.ticks() >= max_ticks {
            exec.exhaust(max_ticks);
            sink(exec.drain_events());
            return Ok(TickStatus::Failure);
        }
    }
}

/// One JSON object per line.
pub fn write_trace_jsonl(out: &mut dyn Write, events: &[TraceEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut *out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use moaplan_core::bt::{BehaviorTree, BtNode, TreeSource};
    use moaplan_core::exec::{
        bind_policies, run_to_completion, BindingTable, PolicyBinding, ScriptedConditions, ScriptedRuntime,
    };

    fn plan() -> ExecutablePlan {
        let tree = BehaviorTree::new("t", BtNode::retry(3, BtNode::action("grasp")), TreeSource::Loaded);
        bind_policies(
            &tree,
            &BindingTable::new().with("*", PolicyBinding::external("pi", "do {action}")),
        )
        .unwrap()
    }

    #[test]
    fn streaming_matches_batch_trace() {
        let p = plan();
        let rt = || {
            ScriptedRuntime::always_succeed()
                .script("grasp", [TickStatus::Running, TickStatus::Failure, TickStatus::Running])
        };
        let (status, trace) = run_to_completion(&p, &mut rt(), &mut ScriptedConditions::new(), 10).unwrap();
        let mut streamed = Vec::new();
        let mut batches = 0;
        let s = run_streaming(&p, &mut rt(), &mut ScriptedConditions::new(), 10, &mut |evs| {
            batches += 1;
            streamed.extend(evs)
        })
        .unwrap();
        assert_eq!(s, status);
        assert_eq!(streamed, trace.events);
        assert_eq!(batches, 3);

        let mut buf = Vec::new();
        write_trace_jsonl(&mut buf, &streamed).unwrap();
        let lines: Vec<&str> = std::str::from_utf8(&buf).unwrap().lines().collect();
        assert_eq!(lines.len(), streamed.len());
        let first: TraceEvent = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first, streamed[0]);
    }

    #[test]
    fn budget_event_is_streamed() {
        let p = plan();
        let mut rt = ScriptedRuntime::new(TickStatus::Running);
        let mut all = Vec::new();
        let s = run_streaming(&p, &mut rt, &mut ScriptedConditions::new(), 2, &mut |evs| {
            all.extend(evs)
        })
        .unwrap();
        assert_eq!(s, TickStatus::Failure);
        assert!(matches!(
            all.last().unwrap().kind,
            moaplan_core::exec::EventKind::BudgetExhausted { max_ticks: 2 }
        ));
    }
}
