//! Command-line front end.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use moaplan_core::embed::HashedBagOfWords;
use moaplan_core::exec::{bind_policies, simulate, simulate_traced, ScriptedConditions, VlmConditions};
use moaplan_core::moa::{Answer, ChainStrategy, ClarificationQuestion};
use moaplan_core::planner::{HumanAnswerSource, Planner, PlanningSession, SessionStatus};
use moaplan_core::xml::serialize_bt;
use serde::Serialize;

use crate::config::Config;
use crate::eval::{compare_report, load_tree, parse_costs, similarity_report, ted_report, Embedder, EmbedderName};
use crate::fanout::ThreadedFanOut;
use crate::providers::{ProviderSet, ProviderSpec};
use crate::runner::{run_streaming, write_trace_jsonl, HttpPolicyRuntime};
use crate::scenario::{self, Manifest, ScriptedHuman};
use crate::service::{self, AppState};
use crate::store::SessionStore;

#[derive(Debug, Parser)]
#[command(name = "moaplan", version, about = "Plan, run and compare robot behavior trees")]
pub struct Cli {
    /// Model provider: live, replay:<transcript> or record:<transcript>.
    #[arg(long, global = true, default_value = "live", env = "MOAPLAN_PROVIDER")]
    pub provider: ProviderSpec,
    /// TOML file with planner settings, agents, bindings and profiles.
    #[arg(long, global = true, env = "MOAPLAN_CONFIG")]
    pub config: Option<PathBuf>,
    /// Where session logs are kept.
    #[arg(long, global = true, default_value = "moaplan-data", env = "MOAPLAN_DATA_DIR")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start a planning session and run it until it needs the user.
    Plan(PlanArgs),
    /// Answer a session's pending questions and keep planning.
    Answer(AnswerArgs),
    /// Print a session's state.
    Show { session_id: String },
    /// Execute a tree against the policy server.
    Run(RunArgs),
    /// Monte-Carlo simulation of a tree under a success profile.
    Simulate(SimulateArgs),
    /// One tree metric for a pair of trees.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Both metrics for a pair of trees.
    Compare(CompareArgs),
    /// Offline replay fixtures.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = service::DEFAULT_ADDR)]
        addr: SocketAddr,
    },
}

#[derive(Debug, Args)]
pub struct Continue {
    /// Answer from a TOML table of question text to answer instead of asking.
    #[arg(long)]
    pub answers_file: Option<PathBuf>,
    /// Ask pending questions on the terminal.
    #[arg(long, short)]
    pub interactive: bool,
    /// Write the final tree here once the session converges.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    pub instruction: String,
    #[arg(long)]
    pub max_turns: Option<u32>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Send every question to the user.
    #[arg(long)]
    pub no_moa: bool,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<ChainStrategy>,
    #[command(flatten)]
    pub cont: Continue,
}

#[derive(Debug, Args)]
pub struct AnswerArgs {
    pub session_id: String,
    /// LABEL=TEXT, once per pending question.
    #[arg(long = "answer", short = 'a', value_parser = parse_answer)]
    pub answers: Vec<(String, String)>,
    #[command(flatten)]
    pub cont: Continue,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub tree: PathBuf,
    #[arg(long, env = "MOAPLAN_POLICY_URL")]
    pub policy_url: Option<String>,
    #[arg(long, env = "MOAPLAN_CAMERA_URL")]
    pub camera_url: Option<String>,
    #[arg(long)]
    pub max_ticks: Option<u32>,
    /// Answer every condition false instead of asking the vision model.
    #[arg(long)]
    pub no_vision: bool,
    /// Write the trace as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub tree: PathBuf,
    #[arg(long)]
    pub profile: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    /// Write the trace of the first run as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Normalized tree edit distance.
    Ted {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// insert,delete,relabel
        #[arg(long, default_value = "1,1,1")]
        costs: String,
    },
    /// Node-level semantic similarity of source against target.
    Sim {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "hashed")]
        embedder: EmbedderName,
    },
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value = "1,1,1")]
    pub costs: String,
    #[arg(long, default_value = "hashed")]
    pub embedder: EmbedderName,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Names and instructions of the fixtures.
    List {
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Replay a fixture offline and check its expectations.
    Run {
        /// Scenario name; every scenario when omitted.
        name: Option<String>,
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Regenerate a fixture transcript from its script.
    Record {
        name: String,
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<ChainStrategy, String> {
    match s {
        "sequential_chain" | "sequential" => Ok(ChainStrategy::SequentialChain),
        "fan_out_aggregate" | "fan_out" => Ok(ChainStrategy::FanOutAggregate),
        _ => Err(format!(
            "unknown strategy {s:?}; use sequential_chain or fan_out_aggregate"
        )),
    }
}

fn parse_answer(s: &str) -> Result<(String, String), String> {
    let (label, text) = s
        .split_once('=')
        .ok_or_else(|| format!("expected LABEL=TEXT, got {s:?}"))?;
    Ok((label.trim().to_string(), text.trim().to_string()))
}

fn print_json(v: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        // a closed pipe (`| head`) is not an error
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

struct Terminal;

impl HumanAnswerSource for Terminal {
    fn answer(&mut self, questions: &[ClarificationQuestion]) -> Result<Vec<Answer>, String> {
        let stdin = std::io::stdin();
        let mut out = Vec::new();
        for q in questions {
            print!("{}: {}\n> ", q.label, q.text);
            std::io::stdout().flush().map_err(|e| e.to_string())?;
            let mut line = String::new();
            if stdin.lock().read_line(&mut line).map_err(|e| e.to_string())? == 0 {
                return Err("input closed".into());
            }
            out.push(Answer::human(&q.label, line.trim()));
        }
        Ok(out)
    }
}

struct Ctx {
    cli_provider: ProviderSpec,
    config: Config,
    data_dir: PathBuf,
}

impl Ctx {
    fn providers(&self) -> anyhow::Result<ProviderSet> {
        ProviderSet::open(&self.cli_provider).with_context(|| format!("opening provider {}", self.cli_provider))
    }

    fn store(&self) -> anyhow::Result<SessionStore> {
        SessionStore::open(self.data_dir.join("sessions"))
    }
}

/// Advances the session until it converges, aborts, or waits on a user
/// with no way to answer here.
fn drive(ctx: &Ctx, session: &mut PlanningSession, cont: &Continue) -> anyhow::Result<()> {
    let store = ctx.store()?;
    let providers = ctx.providers()?;
    let registry = ctx.config.registry()?;
    let threaded = ThreadedFanOut::new(providers.chat.clone());
    let mut planner = Planner::new(&*providers.chat, registry.as_ref());
    if session.config.strategy == ChainStrategy::FanOutAggregate {
        planner = planner.with_fan_out(&threaded);
    }
    let mut human: Option<Box<dyn HumanAnswerSource>> = match (&cont.answers_file, cont.interactive) {
        (Some(path), _) => Some(Box::new(ScriptedHuman::load(path)?)),
        (None, true) => Some(Box::new(Terminal)),
        (None, false) => None,
    };
    loop {
        match session.status {
            SessionStatus::Converged | SessionStatus::Aborted => break,
            SessionStatus::AwaitingModel => {
                let r = planner.advance(session);
                store.persist(session)?;
                r?;
            }
            SessionStatus::AwaitingHuman => {
                let Some(h) = human.as_mut() else { break };
                let answers = h.answer(session.pending_questions()).map_err(anyhow::Error::msg)?;
                session.submit_human_answers(answers)?;
                store.persist(session)?;
            }
        }
    }
    report(session, cont)
}

fn report(session: &PlanningSession, cont: &Continue) -> anyhow::Result<()> {
    if session.status == SessionStatus::Converged {
        if let Some(out) = &cont.out {
            let tree = session.finalize()?;
            std::fs::write(out, serialize_bt(&tree)).with_context(|| format!("writing {}", out.display()))?;
        }
    }
    if cont.json {
        return print_json(&serde_json::json!({
            "session_id": session.session_id,
            "status": session.status,
            "turns": session.turns.len(),
            "proxy_rate": session.proxy_rate(),
            "pending": session.pending_questions(),
        }));
    }
    println!(
        "session {} is {} after {} turn(s)",
        session.session_id,
        session.status,
        session.turns.len()
    );
    match session.status {
        SessionStatus::AwaitingHuman => {
            println!("pending questions:");
            for q in session.pending_questions() {
                println!("  {}: {}", q.label, q.text);
            }
            println!("answer with: moaplan answer {} -a LABEL=TEXT ...", session.session_id);
        }
        SessionStatus::Converged => {
            let tree = session.finalize()?;
            println!("proxy rate {:.3}", session.proxy_rate());
            if cont.out.is_none() {
                print!("{}", serialize_bt(&tree));
            }
        }
        SessionStatus::Aborted => {
            println!("aborted: {}", session.abort_reason.as_deref().unwrap_or("unknown"));
        }
        SessionStatus::AwaitingModel => {}
    }
    Ok(())
}

fn fixture_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.unwrap_or_else(scenario::default_fixture_dir)
}

pub fn run(cli: Cli) -> anyhow::Result<i32> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let ctx = Ctx {
        cli_provider: cli.provider,
        config,
        data_dir: cli.data_dir,
    };
    match cli.command {
        Command::Plan(args) => {
            let mut pc = ctx.config.planner.clone();
            pc.max_turns = args.max_turns.unwrap_or(pc.max_turns);
            pc.temperature = args.temperature.unwrap_or(pc.temperature);
            pc.moa_enabled &= !args.no_moa;
            pc.strategy = args.strategy.unwrap_or(pc.strategy);
            let id = uuid::Uuid::new_v4().to_string();
            let mut session = PlanningSession::start(id, &args.instruction, pc)?;
            ctx.store()?.persist(&mut session)?;
            drive(&ctx, &mut session, &args.cont)?;
        }
        Command::Answer(args) => {
            let store = ctx.store()?;
            let mut session = store.load(&args.session_id)?.session;
            if !args.answers.is_empty() {
                let answers = args.answers.into_iter().map(|(l, t)| Answer::human(l, t)).collect();
                session.submit_human_answers(answers)?;
                store.persist(&mut session)?;
            }
            drive(&ctx, &mut session, &args.cont)?;
        }
        Command::Show { session_id } => {
            let session = ctx.store()?.load(&session_id)?.session;
            print_json(&session)?;
        }
        Command::Run(args) => {
            let tree = load_tree(&args.tree)?;
            let plan = bind_policies(&tree, &ctx.config.bindings)?;
            let url = args
                .policy_url
                .or_else(|| ctx.config.exec.policy_url.clone())
                .context("no policy server: pass --policy-url or set exec.policy_url")?;
            let timeout = std::time::Duration::from_secs(ctx.config.exec.policy_timeout_secs);
            let mut runtime = HttpPolicyRuntime::new(
                url,
                args.camera_url.or_else(|| ctx.config.exec.camera_url.clone()),
                timeout,
            );
            let max_ticks = args.max_ticks.unwrap_or(ctx.config.exec.max_ticks);
            let mut trace_out = match &args.trace {
                Some(p) => Some(std::io::BufWriter::new(std::fs::File::create(p)?)),
                None => None,
            };
            let mut sink = |events: Vec<moaplan_core::exec::TraceEvent>| {
                for e in &events {
                    tracing::info!(seq = e.seq, tick = e.tick, path = %e.path, "{:?}", e.kind);
                }
                if let Some(w) = trace_out.as_mut() {
                    if let Err(e) = write_trace_jsonl(w, &events) {
                        tracing::error!("writing trace: {e}");
                    }
                }
            };
            let status = if args.no_vision {
                run_streaming(
                    &plan,
                    &mut runtime,
                    &mut ScriptedConditions::new(),
                    max_ticks,
                    &mut sink,
                )?
            } else {
                let providers = ctx.providers()?;
                let mut conditions = VlmConditions { vlm: &*providers.vlm };
                run_streaming(&plan, &mut runtime, &mut conditions, max_ticks, &mut sink)?
            };
            if let Some(mut w) = trace_out {
                w.flush()?;
            }
            print_json(&serde_json::json!({ "status": status }))?;
            return Ok(if status == moaplan_core::exec::TickStatus::Success {
                0
            } else {
                1
            });
        }
        Command::Simulate(args) => {
            let tree = load_tree(&args.tree)?;
            let plan = bind_policies(&tree, &ctx.config.bindings)?;
            let profile = ctx.config.profile(&args.profile)?;
            if let Some(path) = &args.trace {
                let (_, trace, _) = simulate_traced(&plan, profile, args.seed)?;
                let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
                write_trace_jsonl(&mut w, &trace.events)?;
                w.flush()?;
            }
            print_json(&simulate(&plan, profile, args.seed, args.runs)?)?;
        }
        Command::Eval(EvalCommand::Ted { a, b, costs }) => {
            print_json(&ted_report(&load_tree(&a)?, &load_tree(&b)?, &parse_costs(&costs)?))?;
        }
        Command::Eval(EvalCommand::Sim {
            source,
            target,
            embedder,
        }) => {
            let emb = make_embedder(&ctx, embedder)?;
            print_json(&similarity_report(&load_tree(&source)?, &load_tree(&target)?, &emb)?)?;
        }
        Command::Compare(args) => {
            let emb = make_embedder(&ctx, args.embedder)?;
            print_json(&compare_report(
                &load_tree(&args.a)?,
                &load_tree(&args.b)?,
                &parse_costs(&args.costs)?,
                &emb,
            )?)?;
        }
        Command::Scenario(ScenarioCommand::List { fixtures }) => {
            let m = Manifest::load(&fixture_dir(fixtures))?;
            for s in &m.scenario {
                println!("{}\t{}", s.name, s.instruction);
            }
        }
        Command::Scenario(ScenarioCommand::Run { name, fixtures }) => {
            let m = Manifest::load(&fixture_dir(fixtures))?;
            let names: Vec<String> = match name {
                Some(n) => vec![n],
                None => m.scenario.iter().map(|s| s.name.clone()).collect(),
            };
            let mut failed = 0;
            for n in &names {
                let (report, _) = scenario::run_scenario(&m, n)?;
                print_json(&report)?;
                if !report.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                eprintln!("{failed} of {} scenario(s) failed", names.len());
                return Ok(1);
            }
        }
        Command::Scenario(ScenarioCommand::Record { name, fixtures }) => {
            let m = Manifest::load(&fixture_dir(fixtures))?;
            let path = scenario::record_scenario(&m, &name)?;
            println!("wrote {}", path.display());
        }
        Command::Serve { addr } => {
            if !addr.ip().is_loopback() {
                tracing::warn!("binding {addr}: the service has no authentication");
            }
            let providers = ctx.providers()?;
            let state = Arc::new(AppState::new(&ctx.data_dir, ctx.config.clone(), providers)?);
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(service::serve(addr, state))?;
        }
    }
    Ok(0)
}

fn make_embedder(ctx: &Ctx, name: EmbedderName) -> anyhow::Result<Embedder> {
    Ok(match name {
        EmbedderName::Hashed => Embedder::Hashed(HashedBagOfWords::default()),
        EmbedderName::Provider => Embedder::Provider(ctx.providers()?.embed),
    })
}
