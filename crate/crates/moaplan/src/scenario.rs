//! Fixture scenarios: a whole planning session replayed from a frozen
//! transcript and checked against the counts and final tree it should
//! produce.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use moaplan_core::bt::BehaviorTree;
use moaplan_core::embed::HashedBagOfWords;
use moaplan_core::metrics::{normalized_tree_distance, semantic_similarity, EditCosts};
use moaplan_core::moa::{Answer, AnswerSource, ClarificationQuestion};
use moaplan_core::planner::{HumanAnswerSource, Planner, PlannerConfig, PlanningSession, SessionStatus};
use moaplan_core::provider::ChatProvider;
use moaplan_core::xml::serialize_bt;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::eval::load_tree;
use crate::providers::{ChatScript, Recorder, Replay, ScriptedChat};

pub const MANIFEST: &str = "scenarios.toml";

/// The repository's fixture directory, unless `MOAPLAN_FIXTURES` says
/// otherwise.
pub fn default_fixture_dir() -> PathBuf {
    match std::env::var_os("MOAPLAN_FIXTURES") {
        Some(d) => d.into(),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub questions: usize,
    pub proxy_answered: usize,
    pub human_answered: usize,
    pub converged_turn: u32,
    /// Answers per agent id; agents not listed must answer nothing.
    #[serde(default)]
    pub by_agent: BTreeMap<String, usize>,
    /// Questions left for the human after the first turn.
    #[serde(default)]
    pub first_turn_pending: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFixture {
    pub name: String,
    pub instruction: String,
    /// How the transcript came to be.
    pub provenance: String,
    pub planner: PlannerConfig,
    /// Agents, bindings and profiles; relative to the manifest.
    pub config: PathBuf,
    pub script: PathBuf,
    pub human: PathBuf,
    pub transcript: PathBuf,
    pub final_tree: PathBuf,
    pub expect: Expectations,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(skip)]
    pub dir: PathBuf,
    pub scenario: Vec<ScenarioFixture>,
}

impl Manifest {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut m: Manifest = toml::from_str(&text).with_context(|| format!("in {}", path.display()))?;
        m.dir = dir.to_path_buf();
        Ok(m)
    }

    pub fn get(&self, name: &str) -> anyhow::Result<&ScenarioFixture> {
        self.scenario.iter().find(|s| s.name == name).with_context(|| {
            let known: Vec<&str> = self.scenario.iter().map(|s| s.name.as_str()).collect();
            format!("no scenario {name:?} (have {known:?})")
        })
    }

    pub fn path(&self, rel: &Path) -> PathBuf {
        self.dir.join(rel)
    }
}

/// Answers by exact question text from a TOML table.
#[derive(Debug, Clone, Default)]
pub struct ScriptedHuman {
    pub answers: BTreeMap<String, String>,
}

impl ScriptedHuman {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(ScriptedHuman {
            answers: toml::from_str(&text).with_context(|| format!("in {}", path.display()))?,
        })
    }

    pub fn answers_for(&self, questions: &[ClarificationQuestion]) -> Result<Vec<Answer>, String> {
        questions
            .iter()
            .map(|q| match self.answers.get(&q.text) {
                Some(a) => Ok(Answer::human(&q.label, a)),
                None => Err(format!("no scripted answer for {}: {:?}", q.label, q.text)),
            })
            .collect()
    }
}

impl HumanAnswerSource for ScriptedHuman {
    fn answer(&mut self, questions: &[ClarificationQuestion]) -> Result<Vec<Answer>, String> {
        self.answers_for(questions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub passed: bool,
    pub questions: usize,
    pub proxy_answered: usize,
    pub human_answered: usize,
    pub proxy_rate: f64,
    pub converged_turn: Option<u32>,
    pub by_agent: BTreeMap<String, usize>,
    pub checks: Vec<Check>,
    /// Line diff between expected and produced final tree, when they differ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_diff: Option<String>,
}

fn check(checks: &mut Vec<Check>, name: &str, expected: impl ToString, actual: impl ToString) {
    let (expected, actual) = (expected.to_string(), actual.to_string());
    checks.push(Check {
        name: name.into(),
        ok: expected == actual,
        expected,
        actual,
    });
}

/// Lines only in one side, marked `-` (expected) and `+` (actual), in
/// order of appearance. Enough to see what changed in a small tree.
pub fn line_diff(expected: &str, actual: &str) -> String {
    let e: Vec<&str> = expected.lines().collect();
    let a: Vec<&str> = actual.lines().collect();
    // longest common subsequence table
    let mut lcs = vec![vec![0usize; a.len() + 1]; e.len() + 1];
    for i in (0..e.len()).rev() {
        for j in (0..a.len()).rev() {
            lcs[i][j] = if e[i] == a[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let (mut i, mut j, mut out) = (0, 0, String::new());
    while i < e.len() || j < a.len() {
        if i < e.len() && j < a.len() && e[i] == a[j] {
            out.push_str(&format!("  {}\n", e[i]));
            i += 1;
            j += 1;
        } else if j < a.len() && (i == e.len() || lcs[i][j + 1] >= lcs[i + 1][j]) {
            out.push_str(&format!("+ {}\n", a[j]));
            j += 1;
        } else {
            out.push_str(&format!("- {}\n", e[i]));
            i += 1;
        }
    }
    out
}

pub fn session_id(fixture: &ScenarioFixture) -> String {
    format!("scenario-{}", fixture.name)
}

/// Runs the planning loop for a fixture against `chat` and the scripted
/// human, returning the finished session.
pub fn play(
    manifest: &Manifest,
    fixture: &ScenarioFixture,
    chat: &dyn ChatProvider,
) -> anyhow::Result<PlanningSession> {
    let config = Config::load(&manifest.path(&fixture.config))?;
    let registry = config.registry()?;
    let mut human = ScriptedHuman::load(&manifest.path(&fixture.human))?;
    let mut session = PlanningSession::start(session_id(fixture), &fixture.instruction, fixture.planner.clone())?;
    Planner::new(chat, registry.as_ref()).run_to_convergence(&mut session, &mut human)?;
    Ok(session)
}

pub fn evaluate(
    manifest: &Manifest,
    fixture: &ScenarioFixture,
    session: &PlanningSession,
) -> anyhow::Result<ScenarioReport> {
    let answers: Vec<&Answer> = session.answers().collect();
    let questions = session.questions().count();
    let proxy_answered = answers.iter().filter(|a| a.source.is_agent()).count();
    let human_answered = answers.len() - proxy_answered;
    let mut by_agent = BTreeMap::new();
    for a in &answers {
        if let AnswerSource::Agent(id) = &a.source {
            *by_agent.entry(id.clone()).or_insert(0) += 1;
        }
    }
    let converged_turn = (session.status == SessionStatus::Converged).then_some(session.turns.len() as u32);
    let exp = &fixture.expect;

    let mut checks = Vec::new();
    check(&mut checks, "status", SessionStatus::Converged, session.status);
    check(&mut checks, "questions", exp.questions, questions);
    check(&mut checks, "proxy_answered", exp.proxy_answered, proxy_answered);
    check(&mut checks, "human_answered", exp.human_answered, human_answered);
    check(
        &mut checks,
        "converged_turn",
        exp.converged_turn,
        converged_turn.map_or("none".into(), |t| t.to_string()),
    );
    check(
        &mut checks,
        "by_agent",
        format!("{:?}", exp.by_agent),
        format!("{by_agent:?}"),
    );
    if let Some(n) = exp.first_turn_pending {
        let got = session.turns.first().map_or(0, |t| t.residual_for_human.len());
        check(&mut checks, "first_turn_pending", n, got);
    }

    let expected_tree = load_tree(&manifest.path(&fixture.final_tree))?;
    let mut tree_diff = None;
    match session.finalize() {
        Ok(tree) => {
            let same = tree.structurally_eq(&expected_tree);
            check(
                &mut checks,
                "final_tree",
                "equal",
                if same { "equal" } else { "different" },
            );
            if !same {
                tree_diff = Some(line_diff(&serialize_bt(&expected_tree), &serialize_bt(&tree)));
            }
            let (ted, sim) = self_scores(&tree)?;
            check(&mut checks, "self_ted", 0, ted);
            check(
                &mut checks,
                "self_similarity_within_1e-9",
                true,
                (sim - 1.0).abs() <= 1e-9,
            );
        }
        Err(e) => check(&mut checks, "final_tree", "equal", format!("error: {e}")),
    }

    Ok(ScenarioReport {
        name: fixture.name.clone(),
        passed: checks.iter().all(|c| c.ok),
        questions,
        proxy_answered,
        human_answered,
        proxy_rate: session.proxy_rate(),
        converged_turn,
        by_agent,
        checks,
        tree_diff,
    })
}

/// Normalized distance and semantic similarity of a tree with itself.
pub fn self_scores(tree: &BehaviorTree) -> anyhow::Result<(f64, f64)> {
    let ted = normalized_tree_distance(tree, tree, &EditCosts::unit()).normalized;
    let sim = semantic_similarity(tree, tree, &HashedBagOfWords::default())?.mean_max;
    Ok((ted, sim))
}

/// Replays the fixture's transcript; no network access.
pub fn run_scenario(manifest: &Manifest, name: &str) -> anyhow::Result<(ScenarioReport, PlanningSession)> {
    let fixture = manifest.get(name)?;
    let replay = Replay::open(&manifest.path(&fixture.transcript))?;
    let session = play(manifest, fixture, &replay).with_context(|| format!("scenario {name}"))?;
    let report = evaluate(manifest, fixture, &session)?;
    Ok((report, session))
}

/// Regenerates the fixture's transcript from its script.
pub fn record_scenario(manifest: &Manifest, name: &str) -> anyhow::Result<PathBuf> {
    let fixture = manifest.get(name)?;
    let script_path = manifest.path(&fixture.script);
    let text = std::fs::read_to_string(&script_path).with_context(|| format!("reading {}", script_path.display()))?;
    let script: ChatScript = toml::from_str(&text).with_context(|| format!("in {}", script_path.display()))?;
    let registry = Config::load(&manifest.path(&fixture.config))?.registry()?;
    let out = manifest.path(&fixture.transcript);
    if out.exists() {
        std::fs::remove_file(&out)?;
    }
    let recorder = Recorder::open(ScriptedChat::new(script, registry), &out)?;
    let session = play(manifest, fixture, &recorder)?;
    if session.status != SessionStatus::Converged {
        bail!("scripted session ended {} instead of converging", session.status);
    }
    Ok(out)
}
