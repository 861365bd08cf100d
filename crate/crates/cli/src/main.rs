//! `shadowdrive` command-line tool.
//!
//! Every operation runs in-process by default; with `--server URL` it is sent
//! to a running service instead. Log verbosity comes from `RUST_LOG`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use shadowdrive_client::Client;
use shadowdrive_core::api::{self, EvalRequest, EvalResponse, ReplayRequest, SimulateRequest, SourceText, SuiteRequest};
use shadowdrive_core::harness::TestScenario;
use shadowdrive_core::session::{Mode, ReplayOutcome, SessionConfig};
use shadowdrive_core::sim::ScenarioSpec;
use shadowdrive_server::ServerConfig;

#[derive(Parser)]
#[command(name = "shadowdrive", version, about = "Highway simulator with a shadow autopilot that previews its actions")]
struct Cli {
    /// Send the operation to a running service (e.g. http://127.0.0.1:8080).
    #[arg(long, global = true, value_name = "URL")]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headless and write its trace.
    Simulate(SimulateArgs),
    /// Host live sessions and the HTTP API.
    Serve(ServeArgs),
    /// Generate a lane-switch timing test suite.
    Suite {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score quiz responses against a suite; prints a table and writes the JSON report.
    Eval {
        /// Responses file, or a directory of `*.json` response files. Repeatable.
        #[arg(long, required = true)]
        responses: Vec<PathBuf>,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a trace and check it is reproduced byte for byte (exit 1 if not).
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ModeArg {
    ManualPreview,
    AutopilotObserve,
    Quiz,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ManualPreview => Mode::ManualPreview,
            ModeArg::AutopilotObserve => Mode::AutopilotObserve,
            ModeArg::Quiz => Mode::Quiz,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario spec (JSON).
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// JSON-lines control log; required for manual_preview.
    #[arg(long)]
    control_log: Option<PathBuf>,
    /// Trace output; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run without the shadow delegate (no preview events in the trace).
    #[arg(long)]
    no_delegate: bool,

    #[arg(long)]
    v_des: Option<f64>,
    /// Planner horizon in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    w_v: Option<f64>,
    #[arg(long)]
    w_lc: Option<f64>,
    #[arg(long)]
    min_gap: Option<f64>,
    /// Predictor horizon in seconds.
    #[arg(long)]
    prediction_horizon: Option<f64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Directory of `<id>.json` scenarios and an optional `suite.json`.
    #[arg(long)]
    scenario_dir: PathBuf,
    /// Where traces and quiz responses are written.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Milliseconds between ticks of a live session.
    #[arg(long, default_value_t = 100)]
    tick_ms: u64,
}

fn read(path: &Path) -> anyhow::Result<SourceText> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SourceText::new(path.display().to_string(), text))
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate_request(args: &SimulateArgs) -> anyhow::Result<SimulateRequest> {
    let src = read(&args.scenario)?;
    let spec = ScenarioSpec::from_json(&src.text, &src.name)?;
    let mut session = SessionConfig::new(args.mode.into(), spec);
    session.attach_delegate = !args.no_delegate;
    if session.mode == Mode::Quiz {
        session.suite_ref = Some(src.name.clone());
    }
    let ap = &mut session.autopilot;
    ap.v_des = args.v_des.unwrap_or(ap.v_des);
    ap.horizon = args.horizon.unwrap_or(ap.horizon);
    ap.w_v = args.w_v.unwrap_or(ap.w_v);
    ap.w_lc = args.w_lc.unwrap_or(ap.w_lc);
    ap.min_gap = args.min_gap.unwrap_or(ap.min_gap);
    session.prediction.horizon = args.prediction_horizon.unwrap_or(session.prediction.horizon);
    let control_log = args.control_log.as_deref().map(read).transpose()?;
    Ok(SimulateRequest { session, control_log })
}

fn response_sources(paths: &[PathBuf]) -> anyhow::Result<Vec<SourceText>> {
    let mut sources = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .with_context(|| format!("listing {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            if files.is_empty() {
                bail!("{} contains no .json response files", path.display());
            }
            for f in files {
                sources.push(read(&f)?);
            }
        } else {
            sources.push(read(path)?);
        }
    }
    Ok(sources)
}

/// Where operations execute.
enum Backend {
    Local,
    Remote(Client),
}

impl Backend {
    async fn simulate(&self, req: SimulateRequest) -> anyhow::Result<api::SimulateResponse> {
        Ok(match self {
            Backend::Local => api::simulate(&req)?,
            Backend::Remote(c) => c.simulate(&req).await?,
        })
    }

    async fn suite(&self, req: SuiteRequest) -> anyhow::Result<Vec<TestScenario>> {
        Ok(match self {
            Backend::Local => api::suite(&req)?,
            Backend::Remote(c) => c.suite(&req).await?,
        })
    }

    async fn eval(&self, req: EvalRequest) -> anyhow::Result<EvalResponse> {
        Ok(match self {
            Backend::Local => api::evaluate(&req)?,
            Backend::Remote(c) => c.eval(&req).await?,
        })
    }

    async fn replay(&self, req: ReplayRequest) -> anyhow::Result<ReplayOutcome> {
        Ok(match self {
            Backend::Local => api::replay(&req)?,
            Backend::Remote(c) => c.replay(&req).await?,
        })
    }
}

async fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let backend = match &cli.server {
        Some(url) => Backend::Remote(Client::new(url.clone())),
        None => Backend::Local,
    };
    match cli.command {
        Command::Simulate(args) => {
            let resp = backend.simulate(simulate_request(&args)?).await?;
            write_or_print(args.out.as_deref(), &resp.trace)?;
            tracing::info!(records = resp.records, "simulation finished");
        }
        Command::Serve(args) => {
            if cli.server.is_some() {
                bail!("--server cannot be combined with serve");
            }
            let mut config = ServerConfig::new(args.scenario_dir, args.data_dir);
            config.tick_interval = Duration::from_millis(args.tick_ms.max(1));
            let listener = tokio::net::TcpListener::bind(args.bind)
                .await
                .with_context(|| format!("binding {}", args.bind))?;
            eprintln!("serving on http://{}", listener.local_addr()?);
            shadowdrive_server::serve(listener, config).await?;
        }
        Command::Suite { seed, n, out } => {
            let suite = backend.suite(SuiteRequest { seed, n }).await?;
            let mut text = serde_json::to_string_pretty(&suite)?;
            text.push('\n');
            write_or_print(out.as_deref(), &text)?;
        }
        Command::Eval { responses, suite, out } => {
            let req = EvalRequest {
                responses: response_sources(&responses)?,
                suite: read(&suite)?,
            };
            let resp = backend.eval(req).await?;
            let mut json = serde_json::to_string_pretty(&resp.report)?;
            json.push('\n');
            std::fs::write(&out, json).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", resp.table);
        }
        Command::Replay { trace } => {
            let outcome = backend.replay(ReplayRequest { trace: read(&trace)? }).await?;
            if outcome.identical {
                println!("identical: {} records reproduced", outcome.records);
            } else {
                match outcome.first_mismatch_line {
                    Some(line) => println!("diverged: first mismatch at line {line}"),
                    None => println!("diverged"),
                }
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
