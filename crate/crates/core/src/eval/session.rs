use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentTrace, Backend, BackendError, BackendRequest};

/// Human verdict on one interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rating {
    pub interaction_id: String,
    pub reasonable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_success: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub success: bool,
    /// The reply was neither YES nor NO.
    pub flagged: bool,
    pub raw: String,
}

pub const JUDGE_SYSTEM: &str = "You grade answers to questions about a 3D indoor scene. \
Reply with a single word: YES if the answer is correct, NO otherwise.";

pub fn judge_prompt(question: &str, answer: &str, gold: &[String]) -> String {
    format!(
        "Question: {question}\nReference answers: {}\nAnswer: {answer}\nIs the answer correct? Reply YES or NO.",
        gold.join(" | ")
    )
}

pub fn parse_verdict(raw: &str) -> Verdict {
    let word = raw
        .split_whitespace()
        .next()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_uppercase();
    let (success, flagged) = match word.as_str() {
        "YES" => (true, false),
        "NO" => (false, false),
        _ => (false, true),
    };
    if flagged {
        tracing::warn!(raw, "unparseable judge verdict counted as failure");
    }
    Verdict {
        success,
        flagged,
        raw: raw.to_string(),
    }
}

pub fn judge_success(
    question: &str,
    answer: &str,
    gold: &[String],
    backend: &dyn Backend,
) -> Result<Verdict, BackendError> {
    let request = BackendRequest {
        system: JUDGE_SYSTEM.to_string(),
        prompt: judge_prompt(question, answer, gold),
        step: 1,
        call_index: 0,
        user_input: question.to_string(),
        max_tokens: 4,
    };
    let response = backend.complete(&request)?;
    let verdict = parse_verdict(&response.raw);
    tracing::info!(question, success = verdict.success, raw = %verdict.raw, "judge verdict");
    Ok(verdict)
}

/// Task key for traces without a task id.
pub const DEFAULT_TASK: &str = "default";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    /// Judged task success rate; absent without judgments.
    pub sr_llm: Option<f64>,
    /// Human task success rate from ratings; absent without task verdicts.
    pub sr_human: Option<f64>,
    /// Share of rated interactions rated reasonable; absent without ratings.
    pub rr_interaction: Option<f64>,
    pub interactions_per_task: f64,
    pub actions_per_interaction: f64,
    pub query_ratio: Option<f64>,
    pub tasks: usize,
    pub interactions: usize,
    pub rated_interactions: usize,
    /// Declared tasks without interactions, left out of every mean.
    pub excluded_tasks: Vec<String>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates a set of interactions. Within a task, interactions are
/// ordered by interaction id, so the result does not depend on input order.
/// `judgments` maps task id to the judged success of that task.
pub fn session_metrics(
    traces: &[AgentTrace],
    ratings: &[Rating],
    tasks: &[String],
    judgments: &BTreeMap<String, bool>,
) -> SessionMetrics {
    let mut traces: Vec<&AgentTrace> = traces.iter().collect();
    traces.sort_by(|a, b| a.interaction_id.cmp(&b.interaction_id));
    let rating: BTreeMap<&str, &Rating> = ratings
        .iter()
        .map(|r| (r.interaction_id.as_str(), r))
        .collect();

    let mut by_task: BTreeMap<&str, Vec<&AgentTrace>> = BTreeMap::new();
    for &t in &traces {
        by_task
            .entry(t.task_id.as_deref().unwrap_or(DEFAULT_TASK))
            .or_default()
            .push(t);
    }
    let excluded_tasks: Vec<String> = tasks
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|t| !by_task.contains_key(t.as_str()))
        .cloned()
        .collect();

    let interactions_per_task = mean(by_task.values().map(|list| {
        let until = list
            .iter()
            .position(|t| {
                rating
                    .get(t.interaction_id.as_str())
                    .is_some_and(|r| r.task_success == Some(true))
            })
            .map_or(list.len(), |i| i + 1);
        until as f64
    }))
    .unwrap_or(0.0);

    let sr_human = mean(by_task.values().filter_map(|list| {
        let verdicts: Vec<bool> = list
            .iter()
            .filter_map(|t| {
                rating
                    .get(t.interaction_id.as_str())
                    .and_then(|r| r.task_success)
            })
            .collect();
        (!verdicts.is_empty()).then(|| if verdicts.contains(&true) { 1.0 } else { 0.0 })
    }));

    let sr_llm =
        mean(
            by_task
                .keys()
                .filter_map(|t| judgments.get(*t))
                .map(|&ok| if ok { 1.0 } else { 0.0 }),
        );

    let rated: Vec<bool> = traces
        .iter()
        .filter_map(|t| rating.get(t.interaction_id.as_str()).map(|r| r.reasonable))
        .collect();

    SessionMetrics {
        sr_llm,
        sr_human,
        rr_interaction: mean(rated.iter().map(|&ok| if ok { 1.0 } else { 0.0 })),
        interactions_per_task,
        actions_per_interaction: mean(traces.iter().map(|t| t.action_count() as f64))
            .unwrap_or(0.0),
        query_ratio: mean(traces.iter().filter_map(|t| t.query_ratio)),
        tasks: by_task.len(),
        interactions: traces.len(),
        rated_interactions: rated.len(),
        excluded_tasks,
    }
}
