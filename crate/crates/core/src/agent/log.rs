//! JSONL trace log: one line per step, then one terminal line per
//! interaction.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use super::{AgentStep, AgentTrace};

#[derive(Debug, Error)]
pub enum TraceLogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Step {
        interaction_id: String,
        step: AgentStep,
    },
    End {
        trace: AgentTrace,
    },
}

/// Appends a finished interaction and syncs the file to disk.
pub fn append_trace(path: &Path, trace: &AgentTrace) -> Result<(), TraceLogError> {
    let io_err = |source| TraceLogError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut out = String::new();
    for step in &trace.steps {
        let line = Line::Step {
            interaction_id: trace.interaction_id.clone(),
            step: step.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("trace lines serialize"));
        out.push('\n');
    }
    let end = Line::End {
        trace: AgentTrace {
            steps: Vec::new(),
            ..trace.clone()
        },
    };
    out.push_str(&serde_json::to_string(&end).expect("trace lines serialize"));
    out.push('\n');

    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err)?;
    file.write_all(out.as_bytes()).map_err(io_err)?;
    file.sync_all().map_err(io_err)
}

fn read_file(path: &Path, traces: &mut Vec<AgentTrace>) -> Result<(), TraceLogError> {
    let file = fs::File::open(path).map_err(|source| TraceLogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pending: HashMap<String, Vec<AgentStep>> = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| TraceLogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|source| TraceLogError::Json {
            path: path.to_path_buf(),
            line: n + 1,
            source,
        })?;
        match parsed {
            Line::Step {
                interaction_id,
                step,
            } => pending.entry(interaction_id).or_default().push(step),
            Line::End { mut trace } => {
                trace.steps = pending.remove(&trace.interaction_id).unwrap_or_default();
                traces.push(trace);
            }
        }
    }
    for id in pending.keys() {
        tracing::warn!(path = %path.display(), interaction = %id, "interaction without an end line ignored");
    }
    Ok(())
}

/// Reads complete interactions from a trace file, or from every `.jsonl`
/// file below a directory in path order.
pub fn read_traces(path: &Path) -> Result<Vec<AgentTrace>, TraceLogError> {
    let mut traces = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = WalkDir::new(path)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        for file in files {
            read_file(&file, &mut traces)?;
        }
    } else {
        read_file(path, &mut traces)?;
    }
    Ok(traces)
}
