use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sgalign_core::agent::{read_traces, Agent, Backend, HttpBackend, HttpConfig, ScriptedBackend};
use sgalign_core::eval::{
    judge_success, read_jsonl, read_ratings, run_benchmark, session_metrics, BenchmarkOptions,
    DEFAULT_TASK,
};
use sgalign_core::graph_text::{ingest, relation_sentence};
use sgalign_core::spatial::{allocentric_all, RelationConfig};
use sgalign_core::{Vec3, ViewerPose};
use sgalign_service::{AppState, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "sgalign",
    version,
    about = "Scene-graph reasoning and alignment workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the stored relations of a scene, plus viewer-relative ones
    /// when a viewer pose is given.
    Relations {
        scene: PathBuf,
        /// Relation thresholds as JSON; missing fields keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Viewer pose as x,y,z,yaw (yaw in radians, 0 faces +y).
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        viewer: Option<ViewerPose>,
        /// Emit JSON instead of sentences.
        #[arg(long)]
        json: bool,
    },
    /// Batch evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long)]
        sessions_dir: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Answer a QA file and score the answers.
    Qa {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        /// Report path; rows already present are not rerun.
        #[arg(long, default_value = "qa_report.jsonl")]
        report: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Aggregate alignment-session traces and ratings.
    Session {
        /// Trace file or directory of trace files.
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// JSONL of {"task_id", "question"?, "answers"?}.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Scenario replayed as the success judge.
        #[arg(long)]
        judge_script: Option<PathBuf>,
        /// Judge with the HTTP backend configured by environment.
        #[arg(long, conflicts_with = "judge_script")]
        judge_http: bool,
    },
}

#[derive(Args)]
struct BackendArgs {
    /// Replay a scripted scenario instead of calling the HTTP backend.
    #[arg(long)]
    script: Option<PathBuf>,
}

impl BackendArgs {
    fn backend(&self) -> Result<Arc<dyn Backend>> {
        match &self.script {
            Some(path) => Ok(Arc::new(ScriptedBackend::load(path)?)),
            None => Ok(Arc::new(HttpBackend::new(HttpConfig::from_env()?))),
        }
    }
}

fn parse_pose(text: &str) -> Result<ViewerPose, String> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z, yaw] if parts.iter().all(|v| v.is_finite()) => {
            Ok(ViewerPose::new(Vec3::new(x, y, z), yaw))
        }
        _ => Err("expected four finite numbers x,y,z,yaw".into()),
    }
}

fn relation_config(path: Option<&Path>) -> Result<RelationConfig> {
    let config = match path {
        Some(p) => {
            serde_json::from_str(&fs::read_to_string(p).with_context(|| p.display().to_string())?)
                .with_context(|| format!("invalid relation config {}", p.display()))?
        }
        None => RelationConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn relations(
    scene: &Path,
    config: Option<&Path>,
    viewer: Option<ViewerPose>,
    as_json: bool,
) -> Result<()> {
    let cfg = relation_config(config)?;
    let text = fs::read_to_string(scene).with_context(|| scene.display().to_string())?;
    let g = ingest(&text, &cfg).with_context(|| scene.display().to_string())?;
    let stored: Vec<_> = g.edges().copied().collect();
    let viewer_rels = viewer
        .map(|v| allocentric_all(&v, &g, &cfg))
        .unwrap_or_default();
    if as_json {
        let out = json!({"scene_id": g.scene_id(), "stored": stored, "viewer": viewer_rels});
        return emit(&serde_json::to_string_pretty(&out)?);
    }
    let lines = stored
        .iter()
        .chain(&viewer_rels)
        .map(|rel| relation_sentence(rel, &g))
        .collect::<Result<Vec<_>, _>>()?;
    emit(&lines.join("\n"))
}

/// Writes to stdout; a closed pipe downstream is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn eval_qa(file: &Path, scenes: &Path, report: &Path, backend: &BackendArgs) -> Result<()> {
    let result = run_benchmark(
        file,
        scenes,
        backend.backend()?,
        report,
        &BenchmarkOptions::default(),
    )?;
    if result.resumed > 0 {
        eprintln!("resumed {} rows from {}", result.resumed, report.display());
    }
    for skipped in &result.aggregate.skipped {
        eprintln!(
            "skipped item {} ({}): {}",
            skipped.item, skipped.scene_id, skipped.reason
        );
    }
    emit(&serde_json::to_string_pretty(&result.aggregate)?)
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskRecord {
    task_id: String,
    #[serde(default)]
    question: Option<String>,
    #[serde(default)]
    answers: Vec<String>,
}

fn eval_session(
    traces: &Path,
    ratings: Option<&Path>,
    tasks: Option<&Path>,
    judge_script: Option<&Path>,
    judge_http: bool,
) -> Result<()> {
    let traces = read_traces(traces)?;
    let ratings = ratings.map(read_ratings).transpose()?.unwrap_or_default();
    let tasks: Vec<TaskRecord> = tasks.map(read_jsonl).transpose()?.unwrap_or_default();

    let judge: Option<Arc<dyn Backend>> = match (judge_script, judge_http) {
        (Some(path), _) => Some(Arc::new(ScriptedBackend::load(path)?)),
        (None, true) => Some(Arc::new(HttpBackend::new(HttpConfig::from_env()?))),
        (None, false) => None,
    };
    let mut judgments = BTreeMap::new();
    let mut flagged = Vec::new();
    if let Some(judge) = &judge {
        for task in &tasks {
            let Some(question) = &task.question else {
                continue;
            };
            if task.answers.is_empty() {
                continue;
            }
            let mut own: Vec<_> = traces
                .iter()
                .filter(|t| t.task_id.as_deref().unwrap_or(DEFAULT_TASK) == task.task_id)
                .collect();
            own.sort_by(|a, b| a.interaction_id.cmp(&b.interaction_id));
            let Some(last) = own.last() else { continue };
            let verdict = judge_success(
                question,
                &last.final_response,
                &task.answers,
                judge.as_ref(),
            )?;
            if verdict.flagged {
                flagged.push(json!({"task_id": task.task_id, "raw": verdict.raw}));
            }
            judgments.insert(task.task_id.clone(), verdict.success);
        }
    }
    let ids: Vec<String> = tasks.iter().map(|t| t.task_id.clone()).collect();
    let metrics = session_metrics(&traces, &ratings, &ids, &judgments);
    for t in &metrics.excluded_tasks {
        eprintln!("task {t} has no interactions and was excluded");
    }
    let mut out = serde_json::to_value(&metrics)?;
    if let Value::Object(map) = &mut out {
        map.insert("flagged_verdicts".into(), Value::Array(flagged));
    }
    emit(&serde_json::to_string_pretty(&out)?)
}

async fn serve(
    scenes: &Path,
    listen: SocketAddr,
    sessions_dir: Option<PathBuf>,
    backend: &BackendArgs,
) -> Result<()> {
    let agent = Agent::new(backend.backend()?);
    let state = AppState::new(
        agent,
        ServiceConfig {
            sessions_dir,
            ..ServiceConfig::default()
        },
    );
    let loaded = state.load_scenes_dir(scenes)?;
    if loaded.is_empty() {
        tracing::warn!(dir = %scenes.display(), "no scenes loaded");
    }
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .with_context(|| format!("cannot listen on {listen}"))?;
    tracing::info!(%listen, scenes = loaded.len(), "serving");
    sgalign_service::serve(listener, state).await?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Relations {
            scene,
            config,
            viewer,
            json,
        } => relations(&scene, config.as_deref(), viewer, json),
        Command::Eval(EvalCommand::Qa {
            file,
            scenes,
            report,
            backend,
        }) => eval_qa(&file, &scenes, &report, &backend),
        Command::Eval(EvalCommand::Session {
            traces,
            ratings,
            tasks,
            judge_script,
            judge_http,
        }) => eval_session(
            &traces,
            ratings.as_deref(),
            tasks.as_deref(),
            judge_script.as_deref(),
            judge_http,
        ),
        Command::Serve {
            scenes,
            listen,
            sessions_dir,
            backend,
        } => {
            if !scenes.is_dir() {
                bail!("{} is not a directory", scenes.display());
            }
            tokio::runtime::Runtime::new()?.block_on(serve(&scenes, listen, sessions_dir, &backend))
        }
    }
}
