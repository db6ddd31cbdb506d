//! A chat model played from a script. Used to author the fixture
//! transcripts and in tests; it recognizes which of the planner's prompts
//! it is looking at and answers from the matching script section.

use std::collections::BTreeMap;
use std::sync::Mutex;

use moaplan_core::moa::render_agent_response;
use moaplan_core::moa::{AgentRegistry, AgentVerdict, LabeledVerdict, Outcome};
use moaplan_core::provider::{ChatProvider, ChatRequest, ChatResponse, ProviderError};
use moaplan_core::template;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTurn {
    /// Reply to the n-th draft prompt.
    pub draft: String,
    #[serde(default)]
    pub analysis: String,
    /// Questions raised about the n-th draft; empty means none.
    #[serde(default)]
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptAgent {
    /// Analysis given for questions the agent leaves alone.
    pub decline: String,
    /// Answers by exact question text.
    #[serde(default)]
    pub answers: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatScript {
    pub turns: Vec<ScriptTurn>,
    #[serde(default)]
    pub agents: BTreeMap<String, ScriptAgent>,
}

impl ChatScript {
    pub fn uncertainty_reply(turn: &ScriptTurn) -> String {
        let mut out = format!("Analysis: {}\n", turn.analysis.trim());
        if turn.questions.is_empty() {
            out.push_str("Questions: NONE\n");
        } else {
            out.push_str("Questions:\n");
            for q in &turn.questions {
                out.push_str("- ");
                out.push_str(q);
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Default)]
struct Cursor {
    drafts: usize,
    reviews: usize,
}

pub struct ScriptedChat {
    script: ChatScript,
    registry: Option<AgentRegistry>,
    cursor: Mutex<Cursor>,
}

fn section<'a>(prompt: &'a str, heading: &str) -> Option<&'a str> {
    let start = prompt.find(&format!("\n{heading}\n"))? + heading.len() + 2;
    let rest = &prompt[start..];
    let end = rest.find("\n\n# ").unwrap_or(rest.len());
    Some(&rest[..end])
}

impl ScriptedChat {
    pub fn new(script: ChatScript, registry: Option<AgentRegistry>) -> Self {
        ScriptedChat {
            script,
            registry,
            cursor: Mutex::new(Cursor::default()),
        }
    }

    fn agent_reply(&self, prompt: &str) -> Result<String, ProviderError> {
        let persona =
            section(prompt, "# Role").ok_or_else(|| ProviderError::Scripted("agent prompt has no role".into()))?;
        let agent = self
            .registry
            .as_ref()
            .and_then(|r| r.agents().iter().find(|a| a.persona.trim_end() == persona))
            .ok_or_else(|| ProviderError::Scripted(format!("no agent with persona {persona:?}")))?;
        let script = self
            .script
            .agents
            .get(&agent.agent_id)
            .ok_or_else(|| ProviderError::Scripted(format!("no script for agent {}", agent.agent_id)))?;
        let list = section(prompt, "# Questions").unwrap_or("");
        let mut per_question = Vec::new();
        for line in list.lines() {
            let Some((label, text)) = line.split_once(": ") else {
                continue;
            };
            per_question.push(match script.answers.get(text) {
                Some(a) => LabeledVerdict {
                    label: label.into(),
                    analysis: "Answerable within my scope.".into(),
                    outcome: Outcome::Answered(a.clone()),
                },
                None => LabeledVerdict {
                    label: label.into(),
                    analysis: script.decline.clone(),
                    outcome: Outcome::Unanswered(text.into()),
                },
            });
        }
        Ok(render_agent_response(&AgentVerdict {
            agent_id: agent.agent_id.clone(),
            per_question,
            discarded: Vec::new(),
        }))
    }
}

impl ChatProvider for ScriptedChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let prompt = request.prompt.as_str();
        let head = |t: &str| t.lines().next().unwrap_or_default().to_string();
        if prompt.starts_with(&head(template::MOA_PROCESS)) {
            return self.agent_reply(prompt).map(ChatResponse::text);
        }
        let mut cursor = self.cursor.lock().unwrap_or_else(|p| p.into_inner());
        if prompt.starts_with(&head(template::DRAFT)) {
            let turn = self
                .script
                .turns
                .get(cursor.drafts)
                .ok_or_else(|| ProviderError::Scripted(format!("script has no draft #{}", cursor.drafts + 1)))?;
            cursor.drafts += 1;
            return Ok(ChatResponse::text(turn.draft.clone()));
        }
        if prompt.starts_with(&head(template::UNCERTAINTY)) {
            let turn = self
                .script
                .turns
                .get(cursor.reviews)
                .ok_or_else(|| ProviderError::Scripted(format!("script has no review #{}", cursor.reviews + 1)))?;
            cursor.reviews += 1;
            return Ok(ChatResponse::text(ChatScript::uncertainty_reply(turn)));
        }
        Err(ProviderError::Scripted("unrecognized prompt".into()))
    }
}
