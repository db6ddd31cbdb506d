use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    parse_agent_response, render_agent_prompt, AgentConfig, AgentRegistry, AgentVerdict, Answer, ClarificationQuestion,
    Outcome,
};
use crate::provider::{ChatProvider, ChatRequest};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStrategy {
    /// Agents in rank order; each sees only what is still unanswered.
    #[default]
    SequentialChain,
    /// Every agent sees every question; the lowest rank wins conflicts.
    FanOutAggregate,
}

/// Which labels were sent to which agent, in call order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dispatch {
    pub agent_id: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentFailure {
    pub agent_id: String,
    pub error: String,
}

/// Two or more agents answered the same question; `kept` is the
/// lowest-ranked one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub label: String,
    pub kept: String,
    pub overridden: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainOutcome {
    pub answers: Vec<Answer>,
    pub residual: Vec<ClarificationQuestion>,
    pub verdicts: Vec<AgentVerdict>,
    pub dispatches: Vec<Dispatch>,
    pub failures: Vec<AgentFailure>,
    pub conflicts: Vec<Conflict>,
}

/// Asks one agent. A transport failure or an unreadable reply yields an
/// all-unanswered verdict plus the failure.
pub fn consult(
    agent: &AgentConfig,
    questions: &[ClarificationQuestion],
    prerequisites: &str,
    temperature: f64,
    chat: &dyn ChatProvider,
) -> (AgentVerdict, Option<AgentFailure>) {
    let request = ChatRequest::new(render_agent_prompt(agent, questions, prerequisites), temperature);
    let parsed = chat
        .complete(&request)
        .map_err(|e| e.to_string())
        .and_then(|resp| parse_agent_response(&agent.agent_id, &resp.text, questions).map_err(|e| e.to_string()));
    match parsed {
        Ok(v) => (v, None),
        Err(error) => (
            AgentVerdict::all_unanswered(&agent.agent_id, questions, &alloc::format!("agent failed: {error}")),
            Some(AgentFailure {
                agent_id: agent.agent_id.clone(),
                error,
            }),
        ),
    }
}

/// How a fan-out round reaches its agents. Results must come back in the
/// order of `agents`.
pub trait FanOut {
    fn consult_all(
        &self,
        agents: &[AgentConfig],
        questions: &[ClarificationQuestion],
        prerequisites: &str,
        temperature: f64,
        chat: &dyn ChatProvider,
    ) -> Vec<(AgentVerdict, Option<AgentFailure>)>;
}

/// One agent after another on the calling thread.
pub struct SerialFanOut;

impl FanOut for SerialFanOut {
    fn consult_all(
        &self,
        agents: &[AgentConfig],
        questions: &[ClarificationQuestion],
        prerequisites: &str,
        temperature: f64,
        chat: &dyn ChatProvider,
    ) -> Vec<(AgentVerdict, Option<AgentFailure>)> {
        agents
            .iter()
            .map(|a| consult(a, questions, prerequisites, temperature, chat))
            .collect()
    }
}

/// Routes questions through the agents. Agent failures never abort the
/// chain: the failed agent simply answers nothing.
pub fn run_chain(
    questions: &[ClarificationQuestion],
    agents: &AgentRegistry,
    chat: &dyn ChatProvider,
    strategy: ChainStrategy,
    prerequisites: &str,
    temperature: f64,
) -> ChainOutcome {
    run_chain_with(
        questions,
        agents,
        chat,
        strategy,
        prerequisites,
        temperature,
        &SerialFanOut,
    )
}

pub fn run_chain_with(
    questions: &[ClarificationQuestion],
    agents: &AgentRegistry,
    chat: &dyn ChatProvider,
    strategy: ChainStrategy,
    prerequisites: &str,
    temperature: f64,
    fan_out: &dyn FanOut,
) -> ChainOutcome {
    let mut out = ChainOutcome::default();
    if questions.is_empty() {
        return out;
    }

    match strategy {
        ChainStrategy::SequentialChain => {
            let mut pending: Vec<ClarificationQuestion> = questions.to_vec();
            for agent in agents.agents() {
                if pending.is_empty() {
                    break;
                }
                out.dispatches.push(Dispatch {
                    agent_id: agent.agent_id.clone(),
                    labels: pending.iter().map(|q| q.label.clone()).collect(),
                });
                let (verdict, failure) = consult(agent, &pending, prerequisites, temperature, chat);
                out.failures.extend(failure);
                pending.retain(|q| !matches!(verdict.get(&q.label).map(|v| &v.outcome), Some(Outcome::Answered(_))));
                out.verdicts.push(verdict);
            }
        }
        ChainStrategy::FanOutAggregate => {
            for agent in agents.agents() {
                out.dispatches.push(Dispatch {
                    agent_id: agent.agent_id.clone(),
                    labels: questions.iter().map(|q| q.label.clone()).collect(),
                });
            }
            for (verdict, failure) in fan_out.consult_all(agents.agents(), questions, prerequisites, temperature, chat)
            {
                out.failures.extend(failure);
                out.verdicts.push(verdict);
            }
        }
    }

    let (answers, residual, conflicts) = aggregate(questions, &out.verdicts, agents);
    out.answers = answers;
    out.residual = residual;
    out.conflicts = conflicts;
    out
}

/// Folds a set of verdicts into final answers. Order of `verdicts` is
/// irrelevant: the lowest chain rank among answering agents wins.
pub fn aggregate(
    questions: &[ClarificationQuestion],
    verdicts: &[AgentVerdict],
    agents: &AgentRegistry,
) -> (Vec<Answer>, Vec<ClarificationQuestion>, Vec<Conflict>) {
    let mut ranked: Vec<&AgentVerdict> = verdicts.iter().collect();
    ranked.sort_by_key(|v| (agents.rank_of(&v.agent_id).unwrap_or(u32::MAX), v.agent_id.clone()));

    let mut answers = Vec::new();
    let mut residual = Vec::new();
    let mut conflicts = Vec::new();

    for q in questions {
        let mut hits = ranked
            .iter()
            .filter_map(|v| match v.get(&q.label).map(|lv| &lv.outcome) {
                Some(Outcome::Answered(text)) => Some((v.agent_id.as_str(), text.as_str())),
                _ => None,
            });
        match hits.next() {
            Some((agent_id, text)) => {
                let overridden: Vec<(String, String)> = hits.map(|(a, t)| (a.to_string(), t.to_string())).collect();
                if !overridden.is_empty() {
                    conflicts.push(Conflict {
                        label: q.label.clone(),
                        kept: agent_id.to_string(),
                        overridden,
                    });
                }
                answers.push(Answer::agent(q.label.clone(), text, agent_id));
            }
            None => residual.push(q.clone()),
        }
    }
    (answers, residual, conflicts)
}
