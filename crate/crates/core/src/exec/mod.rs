//! Executing behavior trees: binding actions to policies, ticking, and
//! Monte-Carlo simulation of stochastic policies.

mod runtime;
mod sim;
mod tick;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{BehaviorTree, NodePath};

pub use runtime::{
    judge_condition, ActionCall, ActionRuntime, ConditionEvaluator, Observation, ScriptedConditions, ScriptedRuntime,
    VlmConditions,
};
pub use sim::{simulate, simulate_traced, ActionProfile, ActionStats, RetryBlockStats, SimProfile, SimStats};
pub use tick::{run_to_completion, Executor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TickStatus {
    Success,
    Failure,
    Running,
}

impl fmt::Display for TickStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TickStatus::Success => "success",
            TickStatus::Failure => "failure",
            TickStatus::Running => "running",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BindingKind {
    External,
    NoOp,
    Wait { seconds: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBinding {
    #[serde(default)]
    pub policy_id: String,
    /// `{action}` is replaced by the bound action's name.
    #[serde(default)]
    pub prompt: String,
    #[serde(flatten)]
    pub kind: BindingKind,
}

impl PolicyBinding {
    pub fn external(policy_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        PolicyBinding {
            policy_id: policy_id.into(),
            prompt: prompt.into(),
            kind: BindingKind::External,
        }
    }

    pub fn no_op() -> Self {
        PolicyBinding {
            policy_id: String::new(),
            prompt: String::new(),
            kind: BindingKind::NoOp,
        }
    }

    pub fn wait(seconds: f64) -> Self {
        PolicyBinding {
            policy_id: String::new(),
            prompt: String::new(),
            kind: BindingKind::Wait { seconds },
        }
    }

    pub fn is_external(&self) -> bool {
        self.kind == BindingKind::External
    }
}

/// Bindings keyed by action name or by a pattern ending in `*`.
///
/// An exact key beats any pattern; among patterns the longest prefix wins,
/// so every name resolves to at most one binding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BindingTable(pub BTreeMap<String, PolicyBinding>);

impl BindingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, binding: PolicyBinding) -> Self {
        self.0.insert(key.into(), binding);
        self
    }

    pub fn resolve(&self, action: &str) -> Option<&PolicyBinding> {
        if let Some(b) = self.0.get(action) {
            return Some(b);
        }
        self.0
            .iter()
            .filter_map(|(k, b)| {
                let prefix = k.strip_suffix('*')?;
                action.starts_with(prefix).then_some((prefix.len(), b))
            })
            .max_by_key(|(len, _)| *len)
            .map(|(_, b)| b)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("no policy bound for actions {0:?}")]
    UnboundAction(Vec<String>),
    #[error("binding {key:?}: {message}")]
    InvalidBinding { key: String, message: String },
    #[error("tree is not valid: {0}")]
    InvalidTree(String),
    #[error("no simulation profile for actions {0:?}")]
    MissingProfile(Vec<String>),
    #[error("invalid simulation profile: {0}")]
    InvalidProfile(String),
    #[error("{0} must be at least 1")]
    ZeroBudget(&'static str),
}

/// A tree whose every action resolves to exactly one binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutablePlan {
    pub tree: BehaviorTree,
    /// Resolved binding per distinct action name, prompt already filled.
    pub bindings: BTreeMap<String, PolicyBinding>,
}

impl ExecutablePlan {
    pub fn binding(&self, action: &str) -> &PolicyBinding {
        &self.bindings[action]
    }

    pub fn external_actions(&self) -> impl Iterator<Item = &str> {
        self.bindings
            .iter()
            .filter(|(_, b)| b.is_external())
            .map(|(a, _)| a.as_str())
    }
}

pub fn bind_policies(tree: &BehaviorTree, table: &BindingTable) -> Result<ExecutablePlan, ExecError> {
    let report = tree.validate();
    if !report.ok {
        let msg = report
            .errors()
            .map(|i| alloc::format!("{}: {}", i.path, i.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(ExecError::InvalidTree(msg));
    }
    for (key, b) in &table.0 {
        if let BindingKind::Wait { seconds } = b.kind {
            if !(seconds > 0.0 && seconds.is_finite()) {
                return Err(ExecError::InvalidBinding {
                    key: key.clone(),
                    message: "wait duration must be positive".into(),
                });
            }
        }
        if b.is_external() && b.policy_id.trim().is_empty() {
            return Err(ExecError::InvalidBinding {
                key: key.clone(),
                message: "external binding needs a policy_id".into(),
            });
        }
    }

    let mut bindings = BTreeMap::new();
    let mut missing = Vec::new();
    for action in tree.action_names() {
        if bindings.contains_key(action) || missing.iter().any(|m| m == action) {
            continue;
        }
        match table.resolve(action) {
            Some(b) => {
                let mut b = b.clone();
                b.prompt = b.prompt.replace("{action}", action);
                bindings.insert(action.to_string(), b);
            }
            None => missing.push(action.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(ExecError::UnboundAction(missing));
    }
    Ok(ExecutablePlan {
        tree: tree.clone(),
        bindings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Enter,
    PolicyInvoked { policy_id: String, prompt: String },
    ConditionJudged { value: bool },
    Result { status: TickStatus },
    Warning { message: String },
    Error { message: String },
    BudgetExhausted { max_ticks: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub tick: u32,
    pub path: NodePath,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
}

impl ExecutionTrace {
    /// Names of actions whose policy was invoked, in order.
    pub fn invoked_actions<'a>(&'a self, tree: &'a BehaviorTree) -> impl Iterator<Item = &'a str> + 'a {
        self.events.iter().filter_map(move |e| match e.kind {
            EventKind::PolicyInvoked { .. } => tree.root.get(&e.path).map(|n| n.name.as_str()),
            _ => None,
        })
    }

    /// Every Enter is closed by a Result for the same node in the same
    /// tick, properly nested.
    pub fn is_well_nested(&self) -> bool {
        let mut stack: Vec<(u32, &NodePath)> = Vec::new();
        let mut last_seq = None;
        for e in &self.events {
            if last_seq.is_some_and(|s| e.seq <= s) {
                return false;
            }
            last_seq = Some(e.seq);
            match &e.kind {
                EventKind::Enter => stack.push((e.tick, &e.path)),
                EventKind::Result { .. } => match stack.pop() {
                    Some((t, p)) if t == e.tick && *p == e.path => {}
                    _ => return false,
                },
                _ => {}
            }
        }
        stack.is_empty()
    }
}
