use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{bleu1, cider, exact_match, rouge_l, TOKENIZER};
use super::{read_qa_file, JsonlError, MeanCi, QaItem};
use crate::agent::{Agent, AgentConfig, Backend, SessionState, TraceStatus};
use crate::graph_text::ingest;
use crate::scene_graph::SceneGraph;
use crate::spatial::RelationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRow {
    pub item: usize,
    pub scene_id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub prediction: String,
    pub status: TraceStatus,
    pub steps: usize,
    pub em: f64,
    pub bleu1: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub item: usize,
    pub scene_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub items: usize,
    pub em: Option<MeanCi>,
    pub bleu1: Option<MeanCi>,
    pub rouge_l: Option<MeanCi>,
    pub cider: Option<MeanCi>,
    pub skipped: Vec<SkippedItem>,
    pub tokenizer: String,
    pub omitted_metrics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ReportLine {
    Item(ItemRow),
    Aggregate(Aggregate),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<ItemRow>,
    pub aggregate: Aggregate,
    /// Rows taken from an earlier run instead of being recomputed.
    pub resumed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BenchmarkOptions {
    pub agent: AgentConfig,
    pub relations: RelationConfig,
}

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Input(#[from] JsonlError),
    #[error("report {path}: {message}")]
    Report { path: PathBuf, message: String },
}

fn report_err(path: &Path, message: impl ToString) -> BenchmarkError {
    BenchmarkError::Report {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn load_rows(report: &Path) -> Result<Vec<ItemRow>, BenchmarkError> {
    if !report.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(report).map_err(|e| report_err(report, e))?;
    let mut rows = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        match serde_json::from_str(line) {
            Ok(ReportLine::Item(row)) => rows.push(row),
            Ok(ReportLine::Aggregate(_)) => {}
            Err(e) => return Err(report_err(report, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(rows)
}

fn write_line(file: &mut fs::File, line: &ReportLine, path: &Path) -> Result<(), BenchmarkError> {
    let mut text = serde_json::to_string(line).expect("report lines serialize");
    text.push('\n');
    file.write_all(text.as_bytes())
        .map_err(|e| report_err(path, e))
}

fn aggregate(rows: &[ItemRow], skipped: Vec<SkippedItem>) -> Aggregate {
    let column = |f: fn(&ItemRow) -> f64| MeanCi::of(&rows.iter().map(f).collect::<Vec<_>>());
    let preds: Vec<String> = rows.iter().map(|r| r.prediction.clone()).collect();
    let golds: Vec<Vec<String>> = rows.iter().map(|r| r.answers.clone()).collect();
    Aggregate {
        items: rows.len(),
        em: column(|r| r.em),
        bleu1: column(|r| r.bleu1),
        rouge_l: column(|r| r.rouge_l),
        cider: MeanCi::of(&cider(&preds, &golds).per_item),
        skipped,
        tokenizer: TOKENIZER.to_string(),
        omitted_metrics: vec!["METEOR".to_string()],
    }
}

/// Answers every question of a QA file with a fresh session on its scene and
/// scores the final responses. Items already present in `report` are kept
/// and not rerun; the report is rewritten with one row per item and a final
/// aggregate line.
pub fn run_benchmark(
    qa_file: &Path,
    scenes_dir: &Path,
    backend: Arc<dyn Backend>,
    report: &Path,
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport, BenchmarkError> {
    let items = read_qa_file(qa_file)?;
    let previous: BTreeMap<usize, ItemRow> = load_rows(report)?
        .into_iter()
        .filter(|r| {
            items
                .get(r.item)
                .is_some_and(|q| q.scene_id == r.scene_id && q.question == r.question)
        })
        .map(|r| (r.item, r))
        .collect();

    if let Some(parent) = report.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| report_err(report, e))?;
    }
    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(report)
        .map_err(|e| report_err(report, e))?;
    for row in previous.values() {
        write_line(&mut file, &ReportLine::Item(row.clone()), report)?;
    }

    let agent = Agent::with_config(backend, options.agent);
    let mut scenes: BTreeMap<String, Result<SceneGraph, String>> = BTreeMap::new();
    let mut rows: Vec<ItemRow> = Vec::new();
    let mut skipped = Vec::new();
    let mut missing_reported = BTreeSet::new();

    for (index, item) in items.iter().enumerate() {
        if let Some(row) = previous.get(&index) {
            rows.push(row.clone());
            continue;
        }
        let scene = scenes.entry(item.scene_id.clone()).or_insert_with(|| {
            let path = scenes_dir.join(format!("{}.json", item.scene_id));
            fs::read_to_string(&path)
                .map_err(|e| format!("{}: {e}", path.display()))
                .and_then(|text| {
                    ingest(&text, &options.relations)
                        .map_err(|e| format!("{}: {e}", path.display()))
                })
        });
        let graph = match scene {
            Ok(g) => g.clone(),
            Err(reason) => {
                if missing_reported.insert(item.scene_id.clone()) {
                    tracing::warn!(scene = %item.scene_id, %reason, "scene unavailable; items skipped");
                }
                skipped.push(SkippedItem {
                    item: index,
                    scene_id: item.scene_id.clone(),
                    reason: reason.clone(),
                });
                continue;
            }
        };
        let row = score(index, item, &agent, graph, &options.relations);
        write_line(&mut file, &ReportLine::Item(row.clone()), report)?;
        rows.push(row);
    }

    let aggregate = aggregate(&rows, skipped);
    write_line(&mut file, &ReportLine::Aggregate(aggregate.clone()), report)?;
    file.sync_all().map_err(|e| report_err(report, e))?;
    Ok(BenchmarkReport {
        rows,
        aggregate,
        resumed: previous.len(),
    })
}

fn score(
    index: usize,
    item: &QaItem,
    agent: &Agent,
    graph: SceneGraph,
    relations: &RelationConfig,
) -> ItemRow {
    let mut session = SessionState {
        config: *relations,
        ..SessionState::new(graph)
    };
    let trace = agent.run(
        format!("qa-{index:05}"),
        &item.question,
        None,
        None,
        &mut session,
    );
    let prediction = trace.final_response;
    ItemRow {
        item: index,
        scene_id: item.scene_id.clone(),
        question: item.question.clone(),
        answers: item.answers.clone(),
        em: exact_match(&prediction, &item.answers),
        bleu1: bleu1(&prediction, &item.answers),
        rouge_l: rouge_l(&prediction, &item.answers),
        prediction,
        status: trace.status,
        steps: trace.steps.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ScriptedBackend;

    const SCENE: &str = r#"{"scene_id": "room", "objects": [
        {"id": 0, "label": "towel", "centroid": [0, 0, 1], "half_extents": [0.2, 0.1, 0.05]}
    ]}"#;

    const SCRIPT: &str = r#"{"interactions": [{"input_contains": "", "steps": [
        {"response": "Plan:\n1. Answer.\nThought: easy\nAction: final_answer\nAction Input: {\"answer\": \"towel\"}"}
    ]}]}"#;

    fn setup() -> (tempfile::TempDir, PathBuf, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let scenes = dir.path().join("scenes");
        fs::create_dir_all(&scenes).unwrap();
        fs::write(scenes.join("room.json"), SCENE).unwrap();
        let qa = dir.path().join("qa.jsonl");
        (dir, scenes, qa)
    }

    fn backend() -> Arc<dyn Backend> {
        Arc::new(ScriptedBackend::from_json(SCRIPT).unwrap())
    }

    #[test]
    fn empty_file_gives_empty_report() {
        let (dir, scenes, qa) = setup();
        fs::write(&qa, "").unwrap();
        let out = dir.path().join("report.jsonl");
        let r = run_benchmark(&qa, &scenes, backend(), &out, &BenchmarkOptions::default()).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.aggregate.items, 0);
        assert_eq!(r.aggregate.em, None);
        assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1);
    }

    #[test]
    fn missing_scene_is_skipped_and_resume_reuses_rows() {
        let (dir, scenes, qa) = setup();
        fs::write(
            &qa,
            concat!(
                "{\"scene_id\":\"room\",\"question\":\"What hangs here?\",\"answers\":[\"towel\"]}\n",
                "{\"scene_id\":\"gone\",\"question\":\"Where?\",\"answers\":[\"x\"]}\n",
                "{\"scene_id\":\"room\",\"question\":\"What is it?\",\"answers\":[\"a towel\", \"cloth\"]}\n",
            ),
        )
        .unwrap();
        let out = dir.path().join("report.jsonl");
        let first =
            run_benchmark(&qa, &scenes, backend(), &out, &BenchmarkOptions::default()).unwrap();
        assert_eq!(first.rows.len(), 2);
        assert_eq!(first.aggregate.skipped.len(), 1);
        assert_eq!(first.aggregate.skipped[0].scene_id, "gone");
        assert_eq!(first.aggregate.em.unwrap().mean, 1.0);
        // the second item averages over a matching and an unrelated reference
        let c = first.aggregate.cider.unwrap().mean;
        assert!(c > 5.0 && c < 10.0);
        let text = fs::read_to_string(&out).unwrap();

        let again =
            run_benchmark(&qa, &scenes, backend(), &out, &BenchmarkOptions::default()).unwrap();
        assert_eq!(again.resumed, 2);
        assert_eq!(again.rows, first.rows);
        assert_eq!(fs::read_to_string(&out).unwrap(), text);
    }
}
