//! Operator command line: run one episode, run a suite, sample Lite, report,
//! serve, list tasks.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use idegym_core::agents::{
    build_policy, AgentDesign, EchoModel, ModelClient, RecordingModel, ReplayModel, ReplayScript,
};
use idegym_core::harness::{
    aggregate, emit_dataset_table, emit_report, full_registry_instances, load_dir,
    load_taskspec_path, sample_lite, InstanceRef, ReportFormat, TaskSpec, DATASETS,
    LITE_PER_DATASET, MANIFEST_FILE,
};
use idegym_core::orchestrator::{
    episode_options, DiskStore, EpisodeJob, OrchestratedEnv, Orchestrator, SessionConfig,
};
use idegym_core::real::LoopbackLauncher;
use idegym_core::runtime::{
    run_episode, write_trajectory_log, EpisodeLimits, EpisodeResult, SystemClock,
    DEFAULT_MAX_STEPS, LONG_HORIZON_MAX_STEPS,
};
use serde::{Deserialize, Serialize};

use crate::api::{router, AppState, CreateSession, TaskIndex};
use crate::client::{HttpClient, HttpEnv};

pub const DEFAULT_BIND: &str = "127.0.0.1:8765";
pub const DEFAULT_DATA_DIR: &str = "datasets";

#[derive(Debug, Parser)]
#[command(
    name = "idegym",
    version,
    about = "Sandboxed IDE environments for agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its trajectory log.
    Run(RunArgs),
    /// Run every task under a directory with bounded parallelism.
    Bench(BenchArgs),
    /// Write the 300-instance Lite manifest.
    SampleLite(SampleLiteArgs),
    /// Category table from per-dataset scores.
    Report(ReportArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// List tasks under the data directory.
    ListTasks(ListTasksArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AgentArg {
    PureCua,
    ToolsCua,
    TextSwe,
}

impl From<AgentArg> for AgentDesign {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::PureCua => AgentDesign::PureCua,
            AgentArg::ToolsCua => AgentDesign::ToolsCua,
            AgentArg::TextSwe => AgentDesign::TextSwe,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Json,
}

#[derive(Debug, Args)]
pub struct AgentOpts {
    #[arg(long, value_enum, default_value = "tools-cua")]
    pub agent: AgentArg,
    /// `replay:PATH` or `echo`. For `bench`, PATH is a directory holding
    /// `<task_id>.<agent>.rpl` tapes.
    #[arg(long, default_value = "echo")]
    pub model: String,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS, conflicts_with = "long_horizon")]
    pub max_steps: u32,
    /// 250-step cap.
    #[arg(long)]
    pub long_horizon: bool,
    /// Set-of-Marks for the pure design.
    #[arg(long)]
    pub som: bool,
    /// Withhold the dataset's assisted tools.
    #[arg(long)]
    pub no_assisted: bool,
}

impl AgentOpts {
    fn limits(&self, task: &TaskSpec) -> EpisodeLimits {
        let base = task.limits.unwrap_or_default();
        EpisodeLimits {
            max_steps: if self.long_horizon {
                LONG_HORIZON_MAX_STEPS
            } else {
                self.max_steps
            },
            ..base
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Task directory (holding manifest.json) or manifest path.
    #[arg(long)]
    pub task: PathBuf,
    #[command(flatten)]
    pub agent: AgentOpts,
    /// Drive a session on a running service instead of in-process.
    #[arg(long)]
    pub server: Option<String>,
    #[arg(long, default_value = "trajectory.jsonl")]
    pub out: PathBuf,
    /// Also write the full episode result as JSON.
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Record the model's responses as a replay tape.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, env = "PWP_DATA_DIR", default_value = DEFAULT_DATA_DIR)]
    pub data_dir: PathBuf,
    /// Only tasks listed in this Lite manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub agent: AgentOpts,
    /// Concurrent sessions.
    #[arg(short = 'k', long, default_value_t = 4)]
    pub parallel: usize,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleLiteArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Result directories (holding scores.json) or score files; one row each.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: FormatArg,
    /// Also print the per-dataset table (markdown only).
    #[arg(long)]
    pub per_dataset: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PWP_BIND", default_value = DEFAULT_BIND)]
    pub bind: SocketAddr,
    #[arg(long, env = "PWP_DATA_DIR", default_value = DEFAULT_DATA_DIR)]
    pub data_dir: PathBuf,
    /// Persist checkpoints here; in memory when unset.
    #[arg(long, env = "PWP_CHECKPOINT_DIR")]
    pub checkpoint_dir: Option<PathBuf>,
    /// Serve `real` sessions from in-process loopback containers.
    #[arg(long)]
    pub loopback_real: bool,
}

#[derive(Debug, Args)]
pub struct ListTasksArgs {
    #[arg(long, env = "PWP_DATA_DIR", default_value = DEFAULT_DATA_DIR)]
    pub data_dir: PathBuf,
}

/// Lite manifest file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiteManifest {
    pub seed: u64,
    pub per_dataset: usize,
    pub instances: Vec<InstanceRef>,
}

pub enum ModelSpec {
    Echo,
    Replay(PathBuf),
}

impl ModelSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "echo" => Ok(ModelSpec::Echo),
            Some(("replay", path)) if !path.is_empty() => Ok(ModelSpec::Replay(path.into())),
            _ => bail!("unknown model {s:?}; expected `echo` or `replay:PATH`"),
        }
    }

    fn client(&self) -> Result<Box<dyn ModelClient>> {
        Ok(match self {
            ModelSpec::Echo => Box::new(EchoModel),
            ModelSpec::Replay(p) => Box::new(ReplayModel::new(
                ReplayScript::load(p).with_context(|| format!("loading tape {}", p.display()))?,
            )),
        })
    }
}

fn load_task(path: &Path) -> Result<TaskSpec> {
    let manifest = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    load_taskspec_path(&manifest).with_context(|| format!("loading {}", manifest.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parses argv and runs; usage errors exit 2, failures exit 1.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::SampleLite(a) => sample_lite_cmd(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
        Command::ListTasks(a) => list_tasks(a),
    }
}

fn run(a: RunArgs) -> Result<()> {
    let task = Arc::new(load_task(&a.task)?);
    let model_spec = ModelSpec::parse(&a.agent.model)?;
    let design: AgentDesign = a.agent.agent.into();
    let limits = a.agent.limits(&task);
    limits.validate().map_err(anyhow::Error::msg)?;
    let mut policy = build_policy(
        design,
        Some(&task.dataset),
        !a.agent.no_assisted,
        a.agent.som,
    );
    let mut model = RecordingModel::new(model_spec.client()?);
    let clock = Arc::new(SystemClock::new());
    let opts = episode_options(&task, limits, clock.clone())?;

    let result = match &a.server {
        Some(url) => {
            let client = HttpClient::new(url.clone());
            let info = client.create(&CreateSession {
                task_id: Some(task.task_id.clone()),
                config: SessionConfig {
                    limits: Some(limits),
                    ..SessionConfig::default()
                },
            })?;
            let mut env = HttpEnv::new(client.clone(), info.session_id.clone());
            let r = run_episode(&mut env, policy.as_mut(), &mut model, &opts);
            client.delete(&info.session_id)?;
            r
        }
        None => {
            let orch = Orchestrator::new(clock);
            let id = orch.create(SessionConfig {
                limits: Some(limits),
                ..SessionConfig::for_task(task.clone())
            })?;
            let mut env = OrchestratedEnv::new(&orch, id.clone());
            let r = run_episode(&mut env, policy.as_mut(), &mut model, &opts);
            orch.destroy(&id)?;
            r
        }
    };

    write_file(&a.out, &write_trajectory_log(&result))?;
    if let Some(p) = &a.result {
        write_file(p, &serde_json::to_string_pretty(&result)?)?;
    }
    if let Some(p) = &a.record {
        write_file(p, &model.script().to_json())?;
    }
    println!(
        "{}  steps={}  termination={:?}  score={:.4}  passed={}",
        task.task_id,
        result.trajectory.records.len(),
        result.termination(),
        result.reward.score,
        result.reward.passed
    );
    Ok(())
}

/// Mean episode score per dataset.
pub fn dataset_scores(results: &[(String, EpisodeResult)]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (dataset, r) in results {
        let e = sums.entry(dataset.clone()).or_default();
        e.0 += r.reward.score;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(d, (s, n))| (d, s / n as f64))
        .collect()
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut tasks = load_dir(&a.data_dir)
        .with_context(|| format!("loading tasks under {}", a.data_dir.display()))?;
    if let Some(m) = &a.manifest {
        let text = std::fs::read_to_string(m)?;
        let lite: LiteManifest = serde_json::from_str(&text).context("parsing Lite manifest")?;
        tasks.retain(|t| {
            lite.instances
                .iter()
                .any(|r| r.dataset == t.dataset && r.instance_id == t.task_id)
        });
    }
    if tasks.is_empty() {
        bail!("no tasks selected");
    }
    let model_spec = ModelSpec::parse(&a.agent.model)?;
    let design: AgentDesign = a.agent.agent.into();
    let clock = Arc::new(SystemClock::new());
    let mut jobs = Vec::new();
    for t in &tasks {
        let task = Arc::new(t.clone());
        let limits = a.agent.limits(t);
        let model: Box<dyn ModelClient> = match &model_spec {
            ModelSpec::Echo => Box::new(EchoModel),
            ModelSpec::Replay(dir) => {
                let tape = dir.join(format!("{}.{}.rpl", t.task_id, design.as_str()));
                // A missing tape leaves an empty script: the episode ends with
                // an error on its first turn and scores zero.
                Box::new(ReplayModel::new(
                    ReplayScript::load(&tape).unwrap_or_default(),
                ))
            }
        };
        jobs.push(EpisodeJob {
            config: SessionConfig {
                limits: Some(limits),
                ..SessionConfig::for_task(task.clone())
            },
            options: episode_options(t, limits, clock.clone())?,
            policy: build_policy(design, Some(&t.dataset), !a.agent.no_assisted, a.agent.som),
            model,
        });
    }
    let orch = Orchestrator::new(clock);
    let results = orch.run_parallel(jobs, a.parallel);

    std::fs::create_dir_all(&a.out)?;
    let mut by_dataset = Vec::new();
    for (t, r) in tasks.iter().zip(results) {
        write_file(
            &a.out.join(format!("{}.log", t.task_id)),
            &write_trajectory_log(&r),
        )?;
        write_file(
            &a.out.join(format!("{}.json", t.task_id)),
            &serde_json::to_string_pretty(&r)?,
        )?;
        println!(
            "{:<32} {:<22} {:?} score={:.4}",
            t.task_id,
            t.dataset,
            r.termination(),
            r.reward.score
        );
        by_dataset.push((t.dataset.clone(), r));
    }
    let scores = dataset_scores(&by_dataset);
    write_file(
        &a.out.join("scores.json"),
        &serde_json::to_string_pretty(&scores)?,
    )?;
    println!("peak concurrent sessions: {}", orch.peak());
    Ok(())
}

fn sample_lite_cmd(a: SampleLiteArgs) -> Result<()> {
    let instances = sample_lite(&full_registry_instances(), a.seed)?;
    let manifest = LiteManifest {
        seed: a.seed,
        per_dataset: LITE_PER_DATASET,
        instances,
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    match &a.out {
        Some(p) => {
            write_file(p, &text)?;
            eprintln!(
                "{} instance refs written to {}",
                manifest.instances.len(),
                p.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn load_scores(input: &Path) -> Result<(String, BTreeMap<String, f64>)> {
    let file = if input.is_dir() {
        input.join("scores.json")
    } else {
        input.to_path_buf()
    };
    let text =
        std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let scores =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
    let label = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| input.display().to_string());
    Ok((label, scores))
}

fn report(a: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for input in &a.inputs {
        let (label, scores) = load_scores(input)?;
        let full = DATASETS.iter().all(|d| scores.contains_key(d.name));
        rows.push(aggregate(&label, &scores, full)?);
    }
    let fmt = match a.format {
        FormatArg::Markdown => ReportFormat::Markdown,
        FormatArg::Json => ReportFormat::Json,
    };
    print!("{}", emit_report(&rows, fmt));
    if a.per_dataset && matches!(a.format, FormatArg::Markdown) {
        println!();
        print!("{}", emit_dataset_table(&rows));
    }
    Ok(())
}

fn list_tasks(a: ListTasksArgs) -> Result<()> {
    for t in load_dir(&a.data_dir)? {
        println!("{}\t{}\t{:?}", t.task_id, t.dataset, t.category);
    }
    Ok(())
}

/// Orchestrator and task index for a service configuration.
pub fn build_state(a: &ServeArgs) -> Result<AppState> {
    let tasks = if a.data_dir.exists() {
        load_dir(&a.data_dir)?
    } else {
        tracing::warn!(dir = %a.data_dir.display(), "data directory missing; serving no tasks");
        Vec::new()
    };
    let mut orch = Orchestrator::new(Arc::new(SystemClock::new()));
    if let Some(dir) = &a.checkpoint_dir {
        orch = orch.with_store(Box::new(DiskStore::open(dir)?));
    }
    if a.loopback_real {
        orch = orch.with_launcher(Box::new(LoopbackLauncher));
    }
    Ok(AppState::new(Arc::new(orch), TaskIndex::new(tasks)))
}

/// Serves on `listener` until `shutdown` resolves, then destroys every session.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<()> {
    let orch = state.orch.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    for id in orch.session_ids() {
        let _ = orch.destroy(&id);
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let state = build_state(&a)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.bind)
            .await
            .with_context(|| format!("binding {}", a.bind))?;
        tracing::info!(addr = %listener.local_addr()?, tasks = state.tasks.len(), "serving");
        serve_on(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}
