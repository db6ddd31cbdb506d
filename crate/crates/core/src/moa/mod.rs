//! Mixture-of-Agents proxy answering.
//!
//! Each expert agent receives the shared three-step process template plus
//! its persona, scope, the prerequisites and a labeled question list. Its
//! reply is split into answerability analysis, labeled answers and
//! questions left unanswered; whatever no agent answers goes to the human.

mod chain;
mod prompt;
mod response;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chain::{
    aggregate, consult, run_chain, run_chain_with, AgentFailure, ChainOutcome, ChainStrategy, Conflict, Dispatch,
    FanOut, SerialFanOut,
};
pub use prompt::{render_agent_prompt, render_question_list};
pub use response::{parse_agent_response, render_agent_response, LabeledVerdict, Outcome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoaError {
    #[error("agent reply has no recognizable section structure")]
    UnparseableResponse,
    #[error("agent registry is empty")]
    EmptyRegistry,
    #[error("duplicate agent id {0:?}")]
    DuplicateAgentId(String),
    #[error("chain rank {0} is used by more than one agent")]
    DuplicateRank(u32),
    #[error("chain rank must be at least 1 (agent {0:?})")]
    InvalidRank(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClarificationQuestion {
    pub label: String,
    pub text: String,
    pub origin_turn: u32,
}

impl ClarificationQuestion {
    pub fn new(label: impl Into<String>, text: impl Into<String>, origin_turn: u32) -> Self {
        ClarificationQuestion {
            label: label.into(),
            text: text.into(),
            origin_turn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub agent_id: String,
    pub persona: String,
    pub scope_rules: String,
    pub chain_rank: u32,
}

/// Agents ordered by ascending chain rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AgentConfig>", into = "Vec<AgentConfig>")]
pub struct AgentRegistry {
    agents: Vec<AgentConfig>,
}

impl AgentRegistry {
    pub fn new(mut agents: Vec<AgentConfig>) -> Result<Self, MoaError> {
        if agents.is_empty() {
            return Err(MoaError::EmptyRegistry);
        }
        agents.sort_by_key(|a| a.chain_rank);
        for (i, a) in agents.iter().enumerate() {
            if a.chain_rank == 0 {
                return Err(MoaError::InvalidRank(a.agent_id.clone()));
            }
            if i > 0 && agents[i - 1].chain_rank == a.chain_rank {
                return Err(MoaError::DuplicateRank(a.chain_rank));
            }
            if agents[..i].iter().any(|b| b.agent_id == a.agent_id) {
                return Err(MoaError::DuplicateAgentId(a.agent_id.clone()));
            }
        }
        Ok(AgentRegistry { agents })
    }

    pub fn agents(&self) -> &[AgentConfig] {
        &self.agents
    }

    pub fn get(&self, agent_id: &str) -> Option<&AgentConfig> {
        self.agents.iter().find(|a| a.agent_id == agent_id)
    }

    pub fn rank_of(&self, agent_id: &str) -> Option<u32> {
        self.get(agent_id).map(|a| a.chain_rank)
    }
}

impl TryFrom<Vec<AgentConfig>> for AgentRegistry {
    type Error = MoaError;

    fn try_from(v: Vec<AgentConfig>) -> Result<Self, MoaError> {
        AgentRegistry::new(v)
    }
}

impl From<AgentRegistry> for Vec<AgentConfig> {
    fn from(r: AgentRegistry) -> Self {
        r.agents
    }
}

/// Per-agent result for one batch of questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentVerdict {
    pub agent_id: String,
    /// One entry per input question, in input order.
    pub per_question: Vec<LabeledVerdict>,
    /// Answers for labels that were not asked.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discarded: Vec<(String, String)>,
}

impl AgentVerdict {
    pub fn get(&self, label: &str) -> Option<&LabeledVerdict> {
        self.per_question.iter().find(|v| v.label == label)
    }

    /// Verdict used when the agent could not be reached or its reply was
    /// unusable: every question stays unanswered, verbatim.
    pub fn all_unanswered(agent_id: &str, questions: &[ClarificationQuestion], note: &str) -> Self {
        AgentVerdict {
            agent_id: agent_id.into(),
            per_question: questions
                .iter()
                .map(|q| LabeledVerdict {
                    label: q.label.clone(),
                    analysis: note.into(),
                    outcome: Outcome::Unanswered(q.text.clone()),
                })
                .collect(),
            discarded: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "agent_id", rename_all = "snake_case")]
pub enum AnswerSource {
    Human,
    Agent(String),
}

impl AnswerSource {
    pub fn is_agent(&self) -> bool {
        matches!(self, AnswerSource::Agent(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub question_label: String,
    pub text: String,
    pub source: AnswerSource,
}

impl Answer {
    pub fn human(label: impl Into<String>, text: impl Into<String>) -> Self {
        Answer {
            question_label: label.into(),
            text: text.into(),
            source: AnswerSource::Human,
        }
    }

    pub fn agent(label: impl Into<String>, text: impl Into<String>, agent_id: impl Into<String>) -> Self {
        Answer {
            question_label: label.into(),
            text: text.into(),
            source: AnswerSource::Agent(agent_id.into()),
        }
    }
}

/// Fraction of answers that came from an agent; 0 when there are none.
pub fn proxy_rate(answers: &[Answer]) -> f64 {
    if answers.is_empty() {
        return 0.0;
    }
    let proxied = answers.iter().filter(|a| a.source.is_agent()).count();
    proxied as f64 / answers.len() as f64
}
