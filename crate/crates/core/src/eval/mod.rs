//! Scoring of answers and alignment sessions.

mod benchmark;
mod metrics;
mod session;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use benchmark::{
    run_benchmark, Aggregate, BenchmarkError, BenchmarkOptions, BenchmarkReport, ItemRow,
    SkippedItem,
};
pub use metrics::{bleu1, cider, exact_match, rouge_l, tokens, CiderScores, TOKENIZER};
pub use session::{
    judge_prompt, judge_success, parse_verdict, session_metrics, Rating, SessionMetrics, Verdict,
    DEFAULT_TASK, JUDGE_SYSTEM,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaItem {
    pub scene_id: String,
    pub question: String,
    pub answers: Vec<String>,
}

/// Mean with a normal-approximation 95% interval half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
}

impl MeanCi {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ci95 = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        };
        Some(Self { mean, ci95 })
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let text = fs::read_to_string(path).map_err(|source| JsonlError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| JsonlError::Line {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_qa_file(path: &Path) -> Result<Vec<QaItem>, JsonlError> {
    let items: Vec<QaItem> = read_jsonl(path)?;
    if let Some(i) = items.iter().position(|q| q.answers.is_empty()) {
        return Err(JsonlError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: "answers must not be empty".into(),
        });
    }
    Ok(items)
}

pub fn read_ratings(path: &Path) -> Result<Vec<Rating>, JsonlError> {
    read_jsonl(path)
}
