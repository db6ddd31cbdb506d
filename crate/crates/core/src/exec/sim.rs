use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::runtime::{ActionCall, ActionRuntime, ConditionEvaluator, Observation};
use super::tick::Executor;
use super::{ExecError, ExecutablePlan, ExecutionTrace, TickStatus};
use crate::bt::NodePath;
use crate::provider::ProviderError;

/// Streams for conditions start here so they never collide with the small
/// ids used for actions.
const CONDITION_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProfile {
    pub success_prob: f64,
    /// ChaCha stream for this action's draws. Must be unique in a profile.
    pub stream: u64,
}

/// Success probabilities per physical action and, optionally, the chance
/// that a condition is found true. Unlisted conditions are false.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimProfile {
    #[serde(default)]
    pub name: String,
    pub actions: BTreeMap<String, ActionProfile>,
    #[serde(default)]
    pub conditions: BTreeMap<String, f64>,
}

impl SimProfile {
    /// Builds a profile assigning streams 1, 2, … in the given order.
    pub fn from_probs<'a>(name: &str, probs: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        let actions = probs
            .into_iter()
            .enumerate()
            .map(|(i, (a, p))| {
                (
                    a.into(),
                    ActionProfile {
                        success_prob: p,
                        stream: i as u64 + 1,
                    },
                )
            })
            .collect();
        SimProfile {
            name: name.into(),
            actions,
            conditions: BTreeMap::new(),
        }
    }

    pub fn check(&self) -> Result<(), ExecError> {
        let bad = |what: &str, p: f64| -> Result<(), ExecError> {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(ExecError::InvalidProfile(format!(
                    "{what} has probability {p} outside [0, 1]"
                )))
            }
        };
        let mut streams = BTreeMap::new();
        for (a, p) in &self.actions {
            bad(a, p.success_prob)?;
            if p.stream >= CONDITION_STREAM_BASE {
                return Err(ExecError::InvalidProfile(format!(
                    "{a}: stream id {} too large",
                    p.stream
                )));
            }
            if let Some(other) = streams.insert(p.stream, a) {
                return Err(ExecError::InvalidProfile(format!(
                    "{a} and {other} share stream {}",
                    p.stream
                )));
            }
        }
        for (c, p) in &self.conditions {
            bad(c, *p)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub attempts: u64,
    pub successes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryBlockStats {
    pub path: NodePath,
    /// Name of the retried child.
    pub child: String,
    pub blocks: u64,
    pub attempts: u64,
    pub mean_attempts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub profile: String,
    pub seed: u64,
    pub runs: u64,
    pub completions: u64,
    pub completion_rate: f64,
    pub actions: BTreeMap<String, ActionStats>,
    pub retry_blocks: Vec<RetryBlockStats>,
    /// Mean child executions over every Retry block entered.
    pub mean_attempts_per_block: f64,
}

impl SimStats {
    /// Binomial standard error of the completion rate.
    pub fn completion_stderr(&self) -> f64 {
        let p = self.completion_rate;
        libm::sqrt(p * (1.0 - p) / self.runs as f64)
    }
}

struct Draws {
    prob: f64,
    rng: ChaCha8Rng,
}

fn stream(seed: u64, id: u64, prob: f64) -> Draws {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    Draws { prob, rng }
}

struct SimRuntime {
    actions: BTreeMap<String, (Draws, ActionStats)>,
}

impl ActionRuntime for SimRuntime {
    fn invoke(&mut self, call: &ActionCall<'_>) -> Result<TickStatus, ProviderError> {
        let (draws, stats) = self
            .actions
            .get_mut(call.action)
            .ok_or_else(|| ProviderError::Config(format!("no profile for {}", call.action)))?;
        stats.attempts += 1;
        if draws.rng.random_bool(draws.prob) {
            stats.successes += 1;
            Ok(TickStatus::Success)
        } else {
            Ok(TickStatus::Failure)
        }
    }
}

struct SimConditions {
    conditions: BTreeMap<String, Draws>,
}

impl ConditionEvaluator for SimConditions {
    fn judge(&mut self, condition: &str, _: &Observation) -> Result<bool, ProviderError> {
        Ok(match self.conditions.get_mut(condition) {
            Some(d) => d.rng.random_bool(d.prob),
            None => false,
        })
    }
}

fn prepare(plan: &ExecutablePlan, profile: &SimProfile, seed: u64) -> Result<(SimRuntime, SimConditions), ExecError> {
    profile.check()?;
    let missing: Vec<String> = plan
        .external_actions()
        .filter(|a| !profile.actions.contains_key(*a))
        .map(String::from)
        .collect();
    if !missing.is_empty() {
        return Err(ExecError::MissingProfile(missing));
    }
    let runtime = SimRuntime {
        actions: plan
            .external_actions()
            .map(|a| {
                let p = &profile.actions[a];
                (
                    String::from(a),
                    (stream(seed, p.stream, p.success_prob), ActionStats::default()),
                )
            })
            .collect(),
    };
    let conditions = SimConditions {
        conditions: profile
            .conditions
            .iter()
            .enumerate()
            .map(|(i, (c, p))| (c.clone(), stream(seed, CONDITION_STREAM_BASE + i as u64, *p)))
            .collect(),
    };
    Ok((runtime, conditions))
}

fn collect_stats(
    plan: &ExecutablePlan,
    exec: &Executor<'_>,
    runtime: SimRuntime,
    profile: &SimProfile,
    seed: u64,
    runs: u64,
    completions: u64,
) -> SimStats {
    let mut total_blocks = 0u64;
    let mut total_attempts = 0u64;
    let retry_blocks = exec
        .retry_counters()
        .map(|(path, blocks, attempts)| {
            total_blocks += blocks;
            total_attempts += attempts;
            let child = plan
                .tree
                .root
                .get(&path.child(0))
                .map(|n| n.name.clone())
                .unwrap_or_default();
            RetryBlockStats {
                path: path.clone(),
                child,
                blocks,
                attempts,
                mean_attempts: if blocks == 0 {
                    0.0
                } else {
                    attempts as f64 / blocks as f64
                },
            }
        })
        .collect();

    SimStats {
        profile: profile.name.clone(),
        seed,
        runs,
        completions,
        completion_rate: completions as f64 / runs as f64,
        actions: runtime.actions.into_iter().map(|(a, (_, s))| (a, s)).collect(),
        retry_blocks,
        mean_attempts_per_block: if total_blocks == 0 {
            0.0
        } else {
            total_attempts as f64 / total_blocks as f64
        },
    }
}

/// Monte-Carlo runs of a plan with each physical action succeeding
/// independently at its profile probability. Every action and condition
/// draws from its own ChaCha stream, so results depend only on
/// (plan, profile, seed, runs).
pub fn simulate(plan: &ExecutablePlan, profile: &SimProfile, seed: u64, runs: u64) -> Result<SimStats, ExecError> {
    if runs == 0 {
        return Err(ExecError::ZeroBudget("runs"));
    }
    let (mut runtime, mut conditions) = prepare(plan, profile, seed)?;
    let mut exec = Executor::new(plan).without_trace();
    let mut completions = 0u64;
    for _ in 0..runs {
        exec.restart();
        // simulated actions are atomic, so one tick settles the tree
        if exec.tick(&mut runtime, &mut conditions) == TickStatus::Success {
            completions += 1;
        }
    }
    Ok(collect_stats(plan, &exec, runtime, profile, seed, runs, completions))
}

/// The first run of [`simulate`] with its trace. Draws match, so the stats
/// equal `simulate(plan, profile, seed, 1)`.
pub fn simulate_traced(
    plan: &ExecutablePlan,
    profile: &SimProfile,
    seed: u64,
) -> Result<(TickStatus, ExecutionTrace, SimStats), ExecError> {
    let (mut runtime, mut conditions) = prepare(plan, profile, seed)?;
    let mut exec = Executor::new(plan);
    let status = exec.tick(&mut runtime, &mut conditions);
    let completions = u64::from(status == TickStatus::Success);
    let stats = collect_stats(plan, &exec, runtime, profile, seed, 1, completions);
    Ok((status, exec.into_trace(), stats))
}
