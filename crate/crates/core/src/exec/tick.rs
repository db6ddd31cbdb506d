use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::runtime::{ActionCall, ActionRuntime, ConditionEvaluator, Observation};
use super::{BindingKind, EventKind, ExecError, ExecutablePlan, ExecutionTrace, TickStatus, TraceEvent};
use crate::bt::{BtNode, NodeKind, NodePath};
use crate::provider::ProviderError;

#[derive(Debug, Clone, Copy, Default)]
struct NodeState {
    /// Next child to tick for Sequence and Fallback.
    cursor: usize,
    /// Completed child executions for Retry.
    attempts: u32,
    /// Retry block entered, or action left Running.
    active: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct RetryCounter {
    blocks: u64,
    attempts: u64,
}

/// Ticks one plan. Composites remember which child was running, so a
/// Running child is resumed on the next tick rather than restarted, and a
/// Retry keeps its attempt count across Running ticks. A node's memory is
/// cleared whenever it returns Success or Failure.
pub struct Executor<'p> {
    plan: &'p ExecutablePlan,
    nodes: Vec<&'p BtNode>,
    paths: Vec<NodePath>,
    children: Vec<Vec<usize>>,
    subtree_end: Vec<usize>,
    state: Vec<NodeState>,
    retry: Vec<RetryCounter>,
    observation: Observation,
    tick: u32,
    seq: u64,
    record: bool,
    trace: ExecutionTrace,
}

impl<'p> Executor<'p> {
    pub fn new(plan: &'p ExecutablePlan) -> Self {
        let mut nodes = Vec::new();
        let mut paths = Vec::new();
        plan.tree.root.walk(&mut |path, node| {
            nodes.push(node);
            paths.push(path.clone());
        });
        let n = nodes.len();
        let mut children = alloc::vec![Vec::new(); n];
        let mut subtree_end = alloc::vec![0; n];
        for i in (0..n).rev() {
            let mut next = i + 1;
            for _ in 0..nodes[i].children.len() {
                children[i].push(next);
                next = subtree_end[next];
            }
            subtree_end[i] = next;
        }
        Executor {
            plan,
            nodes,
            paths,
            children,
            subtree_end,
            state: alloc::vec![NodeState::default(); n],
            retry: alloc::vec![RetryCounter::default(); n],
            observation: Observation::default(),
            tick: 0,
            seq: 0,
            record: true,
            trace: ExecutionTrace::default(),
        }
    }

    /// Skips building the trace; used for bulk simulation.
    pub fn without_trace(mut self) -> Self {
        self.record = false;
        self
    }

    pub fn ticks(&self) -> u32 {
        self.tick
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn into_trace(self) -> ExecutionTrace {
        self.trace
    }

    /// Events recorded since the last call.
    pub fn drain_events(&mut self) -> Vec<TraceEvent> {
        core::mem::take(&mut self.trace.events)
    }

    /// Clears node memory for a fresh run. Retry counters are kept.
    pub fn restart(&mut self) {
        self.state.fill(NodeState::default());
        self.observation = Observation::default();
    }

    /// Per Retry node: times entered and total child executions.
    pub fn retry_counters(&self) -> impl Iterator<Item = (&NodePath, u64, u64)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Retry)
            .map(|(i, _)| (&self.paths[i], self.retry[i].blocks, self.retry[i].attempts))
    }

    fn emit(&mut self, node: usize, kind: EventKind) {
        if !self.record {
            return;
        }
        self.seq += 1;
        self.trace.events.push(TraceEvent {
            seq: self.seq,
            tick: self.tick,
            path: self.paths[node].clone(),
            kind,
        });
    }

    pub fn tick(&mut self, runtime: &mut dyn ActionRuntime, evaluator: &mut dyn ConditionEvaluator) -> TickStatus {
        self.tick += 1;
        self.exec(0, runtime, evaluator)
    }

    /// Marks the run as cut off by the tick budget.
    pub fn exhaust(&mut self, max_ticks: u32) {
        self.emit(0, EventKind::BudgetExhausted { max_ticks });
    }

    fn exec(&mut self, i: usize, rt: &mut dyn ActionRuntime, ev: &mut dyn ConditionEvaluator) -> TickStatus {
        self.emit(i, EventKind::Enter);
        let node = self.nodes[i];
        let status = match node.kind {
            NodeKind::Sequence | NodeKind::Fallback => {
                // Sequence stops at the first Failure, Fallback at the first Success
                let stop = if node.kind == NodeKind::Sequence {
                    TickStatus::Failure
                } else {
                    TickStatus::Success
                };
                let mut status = if stop == TickStatus::Failure {
                    TickStatus::Success
                } else {
                    TickStatus::Failure
                };
                while self.state[i].cursor < self.children[i].len() {
                    let child = self.children[i][self.state[i].cursor];
                    let s = self.exec(child, rt, ev);
                    if s == TickStatus::Running || s == stop {
                        status = s;
                        break;
                    }
                    self.state[i].cursor += 1;
                }
                status
            }
            NodeKind::Retry => {
                let limit = node.retry_attempts().unwrap_or(1);
                let child = self.children[i][0];
                if !self.state[i].active {
                    self.state[i].active = true;
                    self.retry[i].blocks += 1;
                }
                loop {
                    let s = self.exec(child, rt, ev);
                    if s == TickStatus::Running {
                        break s;
                    }
                    self.state[i].attempts += 1;
                    self.retry[i].attempts += 1;
                    if s == TickStatus::Success || self.state[i].attempts >= limit {
                        break s;
                    }
                }
            }
            NodeKind::Condition => match ev.judge(&node.name, &self.observation) {
                Ok(v) => {
                    self.emit(i, EventKind::ConditionJudged { value: v });
                    bool_status(v)
                }
                Err(ProviderError::VerdictUnparseable(raw)) => {
                    self.emit(
                        i,
                        EventKind::Warning {
                            message: format!("unparseable verdict {raw:?}, treating as false"),
                        },
                    );
                    self.emit(i, EventKind::ConditionJudged { value: false });
                    TickStatus::Failure
                }
                Err(e) => {
                    self.emit(i, EventKind::Error { message: e.to_string() });
                    TickStatus::Failure
                }
            },
            NodeKind::Action => self.act(i, rt),
        };
        if status == TickStatus::Running {
            if node.kind == NodeKind::Action {
                self.state[i].active = true;
            }
        } else {
            let end = self.subtree_end[i];
            self.state[i..end].fill(NodeState::default());
        }
        self.emit(i, EventKind::Result { status });
        status
    }

    fn act(&mut self, i: usize, rt: &mut dyn ActionRuntime) -> TickStatus {
        let plan = self.plan;
        let name = self.nodes[i].name.as_str();
        let binding = plan.binding(name);
        let resumed = self.state[i].active;
        let result = match binding.kind {
            BindingKind::NoOp => Ok(TickStatus::Success),
            BindingKind::Wait { seconds } => rt.wait(seconds),
            BindingKind::External => {
                if !resumed {
                    self.observation.before = rt.capture();
                    self.emit(
                        i,
                        EventKind::PolicyInvoked {
                            policy_id: binding.policy_id.clone(),
                            prompt: binding.prompt.clone(),
                        },
                    );
                }
                let r = rt.invoke(&ActionCall {
                    action: name,
                    binding,
                    resumed,
                });
                if !matches!(r, Ok(TickStatus::Running)) {
                    self.observation.after = rt.capture();
                }
                r
            }
        };
        result.unwrap_or_else(|e| {
            self.emit(i, EventKind::Error { message: e.to_string() });
            TickStatus::Failure
        })
    }
}

fn bool_status(v: bool) -> TickStatus {
    if v {
        TickStatus::Success
    } else {
        TickStatus::Failure
    }
}

/// Ticks until the tree stops running or `max_ticks` is spent, in which
/// case the result is Failure and the trace ends with BudgetExhausted.
pub fn run_to_completion(
    plan: &ExecutablePlan,
    runtime: &mut dyn ActionRuntime,
    evaluator: &mut dyn ConditionEvaluator,
    max_ticks: u32,
) -> Result<(TickStatus, ExecutionTrace), ExecError> {
    if max_ticks == 0 {
        return Err(ExecError::ZeroBudget("max_ticks"));
    }
    let mut exec = Executor::new(plan);
    loop {
        let status = exec.tick(runtime, evaluator);
        if status != TickStatus::Running {
            return Ok((status, exec.into_trace()));
        }
        if exec.ticks() >= max_ticks {
            exec.exhaust(max_ticks);
            return Ok((TickStatus::Failure, exec.into_trace()));
        }
    }
}
