//! Interactive planning loop: draft a tree, ask what is uncertain, let the
//! agents answer what they can, hand the rest to the human, repeat.
//!
//! A session is a pure fold over its [`SessionEvent`]s. Every operation
//! appends events to an outbox; persisting the outbox and replaying it with
//! [`PlanningSession::from_events`] reconstructs the same session.

mod parse;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{BehaviorTree, TreeSource};
use crate::moa::{
    run_chain_with, AgentRegistry, AgentVerdict, Answer, AnswerSource, ChainStrategy, ClarificationQuestion, FanOut,
    SerialFanOut,
};
use crate::provider::{ChatProvider, ChatRequest, ProviderError};
use crate::template;
use crate::xml::{parse_bt_xml_with, serialize_node, ParseOptions};

pub use parse::{extract_xml, parse_questions};

/// Attempts filled in on Retry elements a drafted tree leaves unspecified.
pub const DEFAULT_RETRY_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub max_turns: u32,
    pub temperature: f64,
    pub moa_enabled: bool,
    #[serde(default)]
    pub strategy: ChainStrategy,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            max_turns: 5,
            temperature: 0.0,
            moa_enabled: true,
            strategy: ChainStrategy::SequentialChain,
        }
    }
}

impl PlannerConfig {
    pub fn check(&self) -> Result<(), PlannerError> {
        if self.max_turns == 0 {
            return Err(PlannerError::InvalidConfig("max_turns must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(PlannerError::InvalidConfig("temperature must be finite and ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingModel,
    AwaitingHuman,
    Converged,
    Aborted,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionStatus::AwaitingModel => "awaiting_model",
            SessionStatus::AwaitingHuman => "awaiting_human",
            SessionStatus::Converged => "converged",
            SessionStatus::Aborted => "aborted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prerequisite {
    pub label: String,
    pub question: String,
    pub answer: String,
    pub source: AnswerSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u32,
    pub bt_draft: BehaviorTree,
    pub questions: Vec<ClarificationQuestion>,
    pub answers: Vec<Answer>,
    pub residual_for_human: Vec<ClarificationQuestion>,
    /// Each consulted agent's per-question analysis.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<AgentVerdict>,
}

/// One prompt sent during a turn and what came back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: String,
    pub reply: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceReason {
    NoQuestions,
    TurnLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Started {
        session_id: String,
        instruction: String,
        config: PlannerConfig,
        prompt_version: String,
    },
    TurnDrafted {
        turn: Turn,
        status: SessionStatus,
    },
    AnswersSubmitted {
        answers: Vec<Answer>,
    },
    Converged {
        reason: ConvergenceReason,
    },
    Aborted {
        error: String,
        transcript: Vec<Exchange>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("instruction must not be empty")]
    EmptyInstruction,
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
    #[error("operation needs status {expected} but session is {actual}")]
    WrongState {
        expected: SessionStatus,
        actual: SessionStatus,
    },
    #[error("turn limit of {0} reached")]
    TurnLimit(u32),
    #[error("model did not produce a valid behavior tree: {0}")]
    DraftParseFailure(String),
    #[error("model did not produce parseable clarification questions: {0}")]
    QuestionParseFailure(String),
    #[error("no pending question labeled {0:?}")]
    UnknownLabel(String),
    #[error("question {0:?} answered more than once")]
    DuplicateAnswer(String),
    #[error("answers missing for {missing:?}")]
    IncompleteAnswers { missing: Vec<String> },
    #[error("session has not converged")]
    NotConverged,
    #[error("final tree failed validation: {0}")]
    InvalidTree(String),
    #[error("human answer source failed: {0}")]
    HumanSource(String),
    #[error("event log is inconsistent: {0}")]
    CorruptLog(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Supplies answers for questions routed to the human.
pub trait HumanAnswerSource {
    fn answer(&mut self, questions: &[ClarificationQuestion]) -> Result<Vec<Answer>, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningSession {
    pub session_id: String,
    pub instruction: String,
    pub config: PlannerConfig,
    pub prompt_version: String,
    pub prerequisites: Vec<Prerequisite>,
    pub turns: Vec<Turn>,
    pub status: SessionStatus,
    pub abort_reason: Option<String>,
    #[serde(skip)]
    outbox: Vec<SessionEvent>,
}

impl PlanningSession {
    pub fn start(
        session_id: impl Into<String>,
        instruction: &str,
        config: PlannerConfig,
    ) -> Result<Self, PlannerError> {
        if instruction.trim().is_empty() {
            return Err(PlannerError::EmptyInstruction);
        }
        config.check()?;
        let event = SessionEvent::Started {
            session_id: session_id.into(),
            instruction: instruction.to_string(),
            config,
            prompt_version: template::PROMPT_VERSION.to_string(),
        };
        let mut s = Self::from_started(&event)?;
        s.outbox.push(event);
        Ok(s)
    }

    fn from_started(event: &SessionEvent) -> Result<Self, PlannerError> {
        match event {
            SessionEvent::Started {
                session_id,
                instruction,
                config,
                prompt_version,
            } => Ok(PlanningSession {
                session_id: session_id.clone(),
                instruction: instruction.clone(),
                config: config.clone(),
                prompt_version: prompt_version.clone(),
                prerequisites: Vec::new(),
                turns: Vec::new(),
                status: SessionStatus::AwaitingModel,
                abort_reason: None,
                outbox: Vec::new(),
            }),
            other => Err(PlannerError::CorruptLog(format!(
                "log must begin with a start event, found {other:?}"
            ))),
        }
    }

    /// Rebuilds a session from its full event history.
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a SessionEvent>) -> Result<Self, PlannerError> {
        let mut it = events.into_iter();
        let first = it
            .next()
            .ok_or_else(|| PlannerError::CorruptLog("empty event log".into()))?;
        let mut s = Self::from_started(first)?;
        for e in it {
            s.apply(e)?;
        }
        Ok(s)
    }

    /// Events produced since the last call.
    pub fn take_events(&mut self) -> Vec<SessionEvent> {
        core::mem::take(&mut self.outbox)
    }

    fn record(&mut self, event: SessionEvent) -> Result<(), PlannerError> {
        self.apply(&event)?;
        self.outbox.push(event);
        Ok(())
    }

    fn apply(&mut self, event: &SessionEvent) -> Result<(), PlannerError> {
        match event {
            SessionEvent::Started { .. } => {
                return Err(PlannerError::CorruptLog("second start event".into()));
            }
            SessionEvent::TurnDrafted { turn, status } => {
                for a in &turn.answers {
                    let question = turn
                        .questions
                        .iter()
                        .find(|q| q.label == a.question_label)
                        .map(|q| q.text.clone())
                        .unwrap_or_default();
                    self.prerequisites.push(Prerequisite {
                        label: a.question_label.clone(),
                        question,
                        answer: a.text.clone(),
                        source: a.source.clone(),
                    });
                }
                self.turns.push(turn.clone());
                self.status = *status;
            }
            SessionEvent::AnswersSubmitted { answers } => {
                let turn = self
                    .turns
                    .last_mut()
                    .ok_or_else(|| PlannerError::CorruptLog("answers before any turn".into()))?;
                for a in answers {
                    let question = turn
                        .questions
                        .iter()
                        .find(|q| q.label == a.question_label)
                        .map(|q| q.text.clone())
                        .unwrap_or_default();
                    self.prerequisites.push(Prerequisite {
                        label: a.question_label.clone(),
                        question,
                        answer: a.text.clone(),
                        source: a.source.clone(),
                    });
                    turn.answers.push(a.clone());
                }
                self.status = SessionStatus::AwaitingModel;
            }
            SessionEvent::Converged { .. } => self.status = SessionStatus::Converged,
            SessionEvent::Aborted { error, .. } => {
                self.status = SessionStatus::Aborted;
                self.abort_reason = Some(error.clone());
            }
        }
        Ok(())
    }

    fn expect(&self, expected: SessionStatus) -> Result<(), PlannerError> {
        if self.status == expected {
            Ok(())
        } else {
            Err(PlannerError::WrongState {
                expected,
                actual: self.status,
            })
        }
    }

    pub fn last_turn(&self) -> Option<&Turn> {
        self.turns.last()
    }

    /// Questions the human still has to answer.
    pub fn pending_questions(&self) -> &[ClarificationQuestion] {
        match (self.status, self.turns.last()) {
            (SessionStatus::AwaitingHuman, Some(t)) => &t.residual_for_human,
            _ => &[],
        }
    }

    pub fn questions(&self) -> impl Iterator<Item = &ClarificationQuestion> {
        self.turns.iter().flat_map(|t| t.questions.iter())
    }

    pub fn answers(&self) -> impl Iterator<Item = &Answer> {
        self.turns.iter().flat_map(|t| t.answers.iter())
    }

    /// Share of all questions asked so far that an agent answered.
    pub fn proxy_rate(&self) -> f64 {
        let total = self.questions().count();
        if total == 0 {
            return 0.0;
        }
        self.answers().filter(|a| a.source.is_agent()).count() as f64 / total as f64
    }

    pub fn prerequisites_text(&self) -> String {
        let mut out = String::new();
        for p in &self.prerequisites {
            out.push_str(&format!("- {}: {} -> {}\n", p.label, p.question, p.answer));
        }
        out
    }

    fn next_label(&self) -> u32 {
        self.questions().count() as u32 + 1
    }

    pub fn submit_human_answers(&mut self, answers: Vec<Answer>) -> Result<(), PlannerError> {
        self.expect(SessionStatus::AwaitingHuman)?;
        let residual = &self
            .turns
            .last()
            .expect("awaiting human implies a turn")
            .residual_for_human;

        let mut seen: Vec<&str> = Vec::new();
        for a in &answers {
            if !residual.iter().any(|q| q.label == a.question_label) {
                return Err(PlannerError::UnknownLabel(a.question_label.clone()));
            }
            if seen.contains(&a.question_label.as_str()) {
                return Err(PlannerError::DuplicateAnswer(a.question_label.clone()));
            }
            seen.push(&a.question_label);
        }
        let missing: Vec<String> = residual
            .iter()
            .filter(|q| !seen.contains(&q.label.as_str()))
            .map(|q| q.label.clone())
            .collect();
        if !missing.is_empty() {
            return Err(PlannerError::IncompleteAnswers { missing });
        }

        // keep question order, force the human source
        let ordered: Vec<Answer> = residual
            .iter()
            .map(|q| {
                let a = answers.iter().find(|a| a.question_label == q.label).unwrap();
                Answer::human(q.label.clone(), a.text.clone())
            })
            .collect();
        self.record(SessionEvent::AnswersSubmitted { answers: ordered })
    }

    pub fn finalize(&self) -> Result<BehaviorTree, PlannerError> {
        if self.status != SessionStatus::Converged {
            return Err(PlannerError::NotConverged);
        }
        let turn = self.turns.last().ok_or(PlannerError::NotConverged)?;
        let mut tree = turn.bt_draft.clone();
        tree.source = TreeSource::Final;
        tree.tree_id = format!("{}-final", self.session_id);
        let report = tree.validate();
        if !report.ok {
            let msg = report
                .errors()
                .map(|i| format!("{}: {}", i.path, i.message))
                .collect::<Vec<_>>()
                .join("; ");
            return Err(PlannerError::InvalidTree(msg));
        }
        Ok(tree)
    }
}

/// Drives sessions against a chat model and an optional agent registry.
pub struct Planner<'a> {
    pub chat: &'a dyn ChatProvider,
    pub agents: Option<&'a AgentRegistry>,
    pub fan_out: &'a dyn FanOut,
}

impl<'a> Planner<'a> {
    pub fn new(chat: &'a dyn ChatProvider, agents: Option<&'a AgentRegistry>) -> Self {
        Planner {
            chat,
            agents,
            fan_out: &SerialFanOut,
        }
    }

    pub fn with_fan_out(mut self, fan_out: &'a dyn FanOut) -> Self {
        self.fan_out = fan_out;
        self
    }

    fn ask(&self, prompt: String, temperature: f64, transcript: &mut Vec<Exchange>) -> Result<String, ProviderError> {
        let reply = self.chat.complete(&ChatRequest::new(prompt.clone(), temperature))?.text;
        transcript.push(Exchange {
            prompt,
            reply: reply.clone(),
        });
        Ok(reply)
    }

    /// Asks, parses, and on a parse failure asks once more with the error
    /// appended before giving up.
    fn ask_parsed<T>(
        &self,
        prompt: String,
        temperature: f64,
        transcript: &mut Vec<Exchange>,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Result<T, String>, ProviderError> {
        let reply = self.ask(prompt.clone(), temperature, transcript)?;
        match parse(&reply) {
            Ok(v) => Ok(Ok(v)),
            Err(first) => {
                let retry = template::fill(template::REPROMPT, &[("prompt", &prompt), ("error", &first)]);
                let reply = self.ask(retry, temperature, transcript)?;
                Ok(parse(&reply))
            }
        }
    }

    pub fn draft_prompt(session: &PlanningSession) -> String {
        let prereq = session.prerequisites_text();
        template::fill(
            template::DRAFT,
            &[
                ("instruction", &session.instruction),
                (
                    "prerequisites",
                    if prereq.is_empty() {
                        "(none yet)"
                    } else {
                        prereq.trim_end()
                    },
                ),
            ],
        )
    }

    pub fn uncertainty_prompt(session: &PlanningSession, draft: &BehaviorTree) -> String {
        let prereq = session.prerequisites_text();
        // no tree id, so the prompt does not depend on the session id
        let xml = serialize_node(&draft.root);
        template::fill(
            template::UNCERTAINTY,
            &[
                ("instruction", &session.instruction),
                (
                    "prerequisites",
                    if prereq.is_empty() {
                        "(none yet)"
                    } else {
                        prereq.trim_end()
                    },
                ),
                ("tree", xml.trim_end()),
            ],
        )
    }

    fn abort(&self, session: &mut PlanningSession, error: PlannerError, transcript: Vec<Exchange>) -> PlannerError {
        // recording an abort cannot fail: Aborted is always applicable
        let _ = session.record(SessionEvent::Aborted {
            error: error.to_string(),
            transcript,
        });
        error
    }

    /// One refinement round. Provider transport errors leave the session
    /// untouched so the turn can be retried; unusable model output aborts it.
    pub fn draft_turn<'s>(&self, session: &'s mut PlanningSession) -> Result<&'s Turn, PlannerError> {
        session.expect(SessionStatus::AwaitingModel)?;
        if session.turns.len() as u32 >= session.config.max_turns {
            return Err(PlannerError::TurnLimit(session.config.max_turns));
        }
        let temperature = session.config.temperature;
        let index = session.turns.len() as u32 + 1;
        let mut transcript = Vec::new();

        let tree_id = format!("{}-turn{}", session.session_id, index);
        let parse_tree = |reply: &str| {
            let opts = ParseOptions {
                default_retry_attempts: Some(DEFAULT_RETRY_ATTEMPTS),
            };
            parse_bt_xml_with(extract_xml(reply), opts).map_err(|e| e.to_string())
        };
        let draft = match self.ask_parsed(Self::draft_prompt(session), temperature, &mut transcript, parse_tree)? {
            Ok(mut t) => {
                t.tree_id = tree_id;
                t.source = TreeSource::Drafted;
                t
            }
            Err(e) => return Err(self.abort(session, PlannerError::DraftParseFailure(e), transcript)),
        };

        let asked = match self.ask_parsed(
            Self::uncertainty_prompt(session, &draft),
            temperature,
            &mut transcript,
            parse_questions,
        )? {
            Ok(q) => q,
            Err(e) => return Err(self.abort(session, PlannerError::QuestionParseFailure(e), transcript)),
        };

        let first = session.next_label();
        let questions: Vec<ClarificationQuestion> = asked
            .into_iter()
            .enumerate()
            .map(|(i, text)| ClarificationQuestion::new(format!("Q{}", first + i as u32), text, index))
            .collect();

        let mut turn = Turn {
            index,
            bt_draft: draft,
            questions: questions.clone(),
            answers: Vec::new(),
            residual_for_human: questions.clone(),
            verdicts: Vec::new(),
        };

        let status = if questions.is_empty() {
            SessionStatus::Converged
        } else {
            if let (true, Some(agents)) = (session.config.moa_enabled, self.agents) {
                let chain = run_chain_with(
                    &questions,
                    agents,
                    self.chat,
                    session.config.strategy,
                    &session.prerequisites_text(),
                    temperature,
                    self.fan_out,
                );
                turn.answers = chain.answers;
                turn.residual_for_human = chain.residual;
                turn.verdicts = chain.verdicts;
            }
            if turn.residual_for_human.is_empty() {
                SessionStatus::AwaitingModel
            } else {
                SessionStatus::AwaitingHuman
            }
        };

        session.record(SessionEvent::TurnDrafted { turn, status })?;
        if status == SessionStatus::Converged {
            session.record(SessionEvent::Converged {
                reason: ConvergenceReason::NoQuestions,
            })?;
        }
        Ok(session.turns.last().unwrap())
    }

    /// The next model step: a new turn, or convergence once the turn limit
    /// is reached with every question answered.
    pub fn advance(&self, session: &mut PlanningSession) -> Result<(), PlannerError> {
        session.expect(SessionStatus::AwaitingModel)?;
        if session.turns.len() as u32 >= session.config.max_turns {
            return session.record(SessionEvent::Converged {
                reason: ConvergenceReason::TurnLimit,
            });
        }
        self.draft_turn(session).map(|_| ())
    }

    /// Alternates drafting and human answering until a turn raises no
    /// questions or the turn limit is reached. At the limit the last draft
    /// is accepted once its questions have been answered.
    pub fn run_to_convergence(
        &self,
        session: &mut PlanningSession,
        human: &mut dyn HumanAnswerSource,
    ) -> Result<(), PlannerError> {
        loop {
            match session.status {
                SessionStatus::Converged | SessionStatus::Aborted => return Ok(()),
                SessionStatus::AwaitingModel => self.advance(session)?,
                SessionStatus::AwaitingHuman => {
                    let pending = session.pending_questions().to_vec();
                    let answers = human.answer(&pending).map_err(PlannerError::HumanSource)?;
                    session.submit_human_answers(answers)?;
                }
            }
        }
    }
}
