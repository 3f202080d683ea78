//! The plan/act/observe loop.
//!
//! Each step assembles a prompt from the session and the trace so far, asks
//! the backend for one action, executes the tool and records the observation.

mod backend;
mod http;
mod log;
mod parse;

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use backend::{
    Backend, BackendError, BackendRequest, BackendResponse, Scenario, ScenarioError,
    ScriptInteraction, ScriptStep, ScriptText, ScriptVariant, ScriptedBackend,
};
pub use http::{HttpBackend, HttpConfig, ENV_API_KEY, ENV_BASE_URL, ENV_MODEL, ENV_TIMEOUT};
pub use log::{append_trace, read_traces, TraceLogError};
pub use parse::{check_params, parse_action, ParseError, ParsedAction};

use crate::graph_text::{query_ratio, RenderedObservation};
use crate::scene_graph::{SceneGraph, ViewerPose};
use crate::spatial::RelationConfig;
use crate::tools::{descriptors, execute, Click, Highlight, ToolContext, ToolName, ToolPayload};

pub const STEP_LIMIT_RESPONSE: &str = "I could not complete this request.";
pub const PARSE_FAILURE_RESPONSE: &str =
    "Sorry, I could not work out how to handle this request. Please try rephrasing it.";
pub const BACKEND_FAILURE_RESPONSE: &str =
    "Sorry, the language model is unavailable right now. Please try again later.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub index: usize,
    pub call_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    pub thought: String,
    pub action: ToolName,
    pub action_input: Map<String, Value>,
    pub observation: String,
    pub graph_changed: bool,
    pub revision_after: u64,
    /// Model output exactly as received.
    pub raw: String,
    /// Graph content retrieved by this step, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieved: Option<RenderedObservation>,
}

/// Model output that could not be parsed into a tool call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedOutput {
    pub call_index: usize,
    pub raw: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Completed,
    StepLimit,
    ParseFailure,
    BackendFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub interaction_id: String,
    pub user_input: String,
    pub marked_click: Option<Click>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub steps: Vec<AgentStep>,
    #[serde(default)]
    pub rejected: Vec<RejectedOutput>,
    pub final_response: String,
    pub status: TraceStatus,
    #[serde(default)]
    pub highlights: Vec<Highlight>,
    #[serde(default)]
    pub query_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

impl AgentTrace {
    fn start(
        interaction_id: String,
        user_input: &str,
        mark: Option<Click>,
        task_id: Option<String>,
    ) -> Self {
        Self {
            interaction_id,
            user_input: user_input.to_string(),
            marked_click: mark,
            task_id,
            steps: Vec::new(),
            rejected: Vec::new(),
            final_response: String::new(),
            status: TraceStatus::Completed,
            highlights: Vec::new(),
            query_ratio: None,
            backend_error: None,
        }
    }

    pub fn action_count(&self) -> usize {
        self.steps.len()
    }

    pub fn mutated(&self) -> bool {
        self.steps.iter().any(|s| s.graph_changed)
    }
}

/// Everything an interaction may read or change.
#[derive(Debug, Clone, Default)]
pub struct SessionState {
    pub graph: SceneGraph,
    pub viewer: ViewerPose,
    pub mark: Option<Click>,
    pub config: RelationConfig,
}

impl SessionState {
    pub fn new(graph: SceneGraph) -> Self {
        Self {
            graph,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub max_steps: usize,
    /// Consecutive unparseable outputs tolerated before giving up.
    pub max_parse_failures: usize,
    pub max_tokens: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_steps: 12,
            max_parse_failures: 3,
            max_tokens: 512,
        }
    }
}

pub const SYSTEM_PREAMBLE: &str = "\
You are an assistant for a 3D indoor scene. You answer the user's questions about the scene and \
correct the scene graph when the user says it is wrong. You see the scene only through the tools below.

Answer every step in exactly this format:
Plan:
1. <first sub-task>
2. <next sub-task>
Thought: <your reasoning for this step>
Action: <one tool name>
Action Input: <the tool parameters as a JSON object on a single line>

Write the Plan block at the first step only. After each action you receive an Observation.
Before calling query_for_objects, rewrite noun phrases to their singular base form, e.g. \"mugs\" becomes \"mug\".
When the user refers to the marked object, call find_marked_object.
Left, right, in front and behind depend on the viewer and cannot be added or removed.
Call post_process with the objects the user should see, then finish with final_answer.";

/// The system prompt: preamble plus tool signatures.
pub fn system_prompt() -> String {
    let mut out = String::from(SYSTEM_PREAMBLE);
    out.push_str("\n\nTools:\n");
    for d in descriptors() {
        let _ = writeln!(out, "- {}", d.signature());
    }
    out
}

fn history(trace: &AgentTrace) -> String {
    enum Entry<'a> {
        Step(&'a AgentStep),
        Rejected(&'a RejectedOutput),
    }
    let mut entries: Vec<(usize, Entry)> = trace
        .steps
        .iter()
        .map(|s| (s.call_index, Entry::Step(s)))
        .chain(
            trace
                .rejected
                .iter()
                .map(|r| (r.call_index, Entry::Rejected(r))),
        )
        .collect();
    entries.sort_by_key(|(call, _)| *call);

    let mut out = String::new();
    for (_, entry) in entries {
        match entry {
            Entry::Step(s) => {
                let _ = writeln!(out, "Step {}", s.index);
                if let Some(plan) = &s.plan {
                    let _ = writeln!(out, "Plan:\n{plan}");
                }
                let _ = writeln!(out, "Thought: {}", s.thought);
                let _ = writeln!(out, "Action: {}", s.action);
                let _ = writeln!(
                    out,
                    "Action Input: {}",
                    Value::Object(s.action_input.clone())
                );
                let _ = writeln!(out, "Observation: {}", s.observation);
            }
            Entry::Rejected(r) => {
                let _ = writeln!(out, "Unparsed output: {}", r.raw.trim());
                let _ = writeln!(out, "Observation: {}", r.error);
            }
        }
    }
    out
}

/// Builds the request for the next backend call. Pure in its inputs.
pub fn assemble_prompt(
    session: &SessionState,
    trace: &AgentTrace,
    max_tokens: u32,
) -> BackendRequest {
    let step = trace.steps.len() + 1;
    let marked = match session.mark {
        Some(_) => "yes (use find_marked_object to resolve it)",
        None => "none",
    };
    let prompt = format!(
        "User input: {}\nMarked object: {marked}\nCurrent step: {step}\nHistory:\n{}",
        trace.user_input,
        history(trace)
    );
    BackendRequest {
        system: system_prompt(),
        prompt,
        step,
        call_index: trace.steps.len() + trace.rejected.len(),
        user_input: trace.user_input.clone(),
        max_tokens,
    }
}

pub struct Agent {
    backend: Arc<dyn Backend>,
    config: AgentConfig,
}

impl Agent {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self::with_config(backend, AgentConfig::default())
    }

    pub fn with_config(backend: Arc<dyn Backend>, config: AgentConfig) -> Self {
        Self { backend, config }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    /// Runs one interaction against the session. A `click` replaces the
    /// session's current mark before the loop starts.
    pub fn run(
        &self,
        interaction_id: impl Into<String>,
        user_input: &str,
        click: Option<Click>,
        task_id: Option<String>,
        session: &mut SessionState,
    ) -> AgentTrace {
        if click.is_some() {
            session.mark = click;
        }
        let mut trace = AgentTrace::start(interaction_id.into(), user_input, session.mark, task_id);
        let mut failures = 0;
        trace.status = loop {
            if trace.steps.len() >= self.config.max_steps {
                break TraceStatus::StepLimit;
            }
            let request = assemble_prompt(session, &trace, self.config.max_tokens);
            let raw = match self.backend.complete(&request) {
                Ok(response) => response.raw,
                Err(e) => {
                    tracing::error!(interaction = %trace.interaction_id, error = %e, "backend failure");
                    trace.backend_error = Some(e.to_string());
                    break TraceStatus::BackendFailure;
                }
            };
            let index = request.step;
            let parsed = parse_action(&raw).and_then(|p| match (index, p.plan.is_some()) {
                (1, false) => Err(ParseError::MissingPlan),
                (1, true) => Ok(p),
                _ => Ok(ParsedAction { plan: None, ..p }),
            });
            let parsed = match parsed {
                Ok(p) => p,
                Err(e) => {
                    tracing::debug!(call = request.call_index, error = %e, "unparseable output");
                    trace.rejected.push(RejectedOutput {
                        call_index: request.call_index,
                        raw,
                        error: e.to_string(),
                    });
                    failures += 1;
                    if failures >= self.config.max_parse_failures {
                        break TraceStatus::ParseFailure;
                    }
                    continue;
                }
            };
            failures = 0;

            let mut ctx = ToolContext {
                graph: &mut session.graph,
                mark: session.mark,
                viewer: session.viewer,
                config: &session.config,
            };
            let (observation, graph_changed, retrieved) =
                match execute(parsed.action, &parsed.action_input, &mut ctx) {
                    Ok(result) => {
                        if let ToolPayload::Highlights(h) = &result.payload {
                            trace.highlights = h.clone();
                        }
                        if let ToolPayload::Answer(answer) = &result.payload {
                            trace.final_response = answer.clone();
                        }
                        let obs = result.observation;
                        let retrieved = (!obs.source_ids.is_empty()
                            || !obs.source_edges.is_empty())
                        .then(|| obs.clone());
                        (obs.text, result.graph_changed, retrieved)
                    }
                    Err(e) => (e.to_string(), false, None),
                };
            let done = parsed.action == ToolName::FinalAnswer;
            trace.steps.push(AgentStep {
                index,
                call_index: request.call_index,
                plan: parsed.plan,
                thought: parsed.thought,
                action: parsed.action,
                action_input: parsed.action_input,
                observation,
                graph_changed,
                revision_after: session.graph.revision(),
                raw,
                retrieved,
            });
            if done {
                break TraceStatus::Completed;
            }
        };

        match trace.status {
            TraceStatus::Completed => {}
            TraceStatus::StepLimit => trace.final_response = STEP_LIMIT_RESPONSE.into(),
            TraceStatus::ParseFailure => trace.final_response = PARSE_FAILURE_RESPONSE.into(),
            TraceStatus::BackendFailure => trace.final_response = BACKEND_FAILURE_RESPONSE.into(),
        }
        let retrieved: Vec<RenderedObservation> = trace
            .steps
            .iter()
            .filter_map(|s| s.retrieved.clone())
            .collect();
        trace.query_ratio = query_ratio(&retrieved, &session.graph);
        trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_graph::{AttributeCategory, ObjectNode, Predicate, SpatialRelation, Vec3};

    fn graph() -> SceneGraph {
        SceneGraph::from_parts(
            "t",
            vec![
                ObjectNode::new(
                    0,
                    "table",
                    Vec3::new(0.0, 0.0, 0.4),
                    Vec3::new(1.0, 0.5, 0.4),
                ),
                ObjectNode::new(
                    5,
                    "book",
                    Vec3::new(0.0, 0.0, 0.9),
                    Vec3::new(0.1, 0.1, 0.1),
                )
                .with_attribute(AttributeCategory::Color, &["green"]),
            ],
            vec![SpatialRelation::new(0, Predicate::Support, 5)],
        )
        .unwrap()
    }

    fn scripted(json: &str) -> Arc<dyn Backend> {
        Arc::new(ScriptedBackend::from_json(json).unwrap())
    }

    fn step(plan: bool, action: &str, input: &str) -> String {
        let plan = if plan {
            "Plan:\\n1. Look.\\n2. Answer.\\n"
        } else {
            ""
        };
        format!(
            "{{\"response\": \"{plan}Thought: go\\nAction: {action}\\nAction Input: {input}\"}}"
        )
    }

    #[test]
    fn immediate_final_answer() {
        let script = format!(
            r#"{{"interactions": [{{"input_contains": "", "steps": [{}]}}]}}"#,
            step(true, "final_answer", r#"{\"answer\": \"hi\"}"#)
        );
        let agent = Agent::new(scripted(&script));
        let mut session = SessionState::new(graph());
        let trace = agent.run("i1", "hello", None, None, &mut session);
        assert_eq!(trace.status, TraceStatus::Completed);
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.final_response, "hi");
        assert_eq!(trace.steps[0].plan.as_deref(), Some("1. Look.\n2. Answer."));
        assert_eq!(trace.query_ratio, Some(0.0));
    }

    #[test]
    fn missing_plan_then_recovery() {
        let script = format!(
            r#"{{"interactions": [{{"input_contains": "", "steps": [{}, {}, {}]}}]}}"#,
            step(false, "final_answer", r#"{\"answer\": \"x\"}"#),
            step(true, "query_for_objects", r#"{\"query\": \"book\"}"#),
            step(true, "final_answer", r#"{\"answer\": \"a book\"}"#),
        );
        let agent = Agent::new(scripted(&script));
        let mut session = SessionState::new(graph());
        let trace = agent.run("i1", "what is here", None, None, &mut session);
        assert_eq!(trace.status, TraceStatus::Completed);
        assert_eq!(trace.rejected.len(), 1);
        assert_eq!(trace.steps.len(), 2);
        assert_eq!(trace.steps[1].index, 2);
        // a plan after the first step is dropped
        assert_eq!(trace.steps[1].plan, None);
        assert!(trace.query_ratio.unwrap() > 0.0);
    }

    #[test]
    fn gibberish_three_times() {
        let script = r#"{"interactions": [{"input_contains": "", "repeat_last": true, "steps": [{"response": "blah"}]}]}"#;
        let agent = Agent::new(scripted(script));
        let mut session = SessionState::new(graph());
        let trace = agent.run("i1", "hello", None, None, &mut session);
        assert_eq!(trace.status, TraceStatus::ParseFailure);
        assert_eq!(trace.rejected.len(), 3);
        assert!(trace.steps.is_empty());
        assert_eq!(trace.final_response, PARSE_FAILURE_RESPONSE);
    }

    #[test]
    fn step_limit() {
        let script = format!(
            r#"{{"interactions": [{{"input_contains": "", "repeat_last": true, "steps": [{}]}}]}}"#,
            step(true, "query_for_objects", r#"{\"query\": \"book\"}"#)
        );
        let agent = Agent::with_config(
            scripted(&script),
            AgentConfig {
                max_steps: 4,
                ..AgentConfig::default()
            },
        );
        let mut session = SessionState::new(graph());
        let trace = agent.run("i1", "hello", None, None, &mut session);
        assert_eq!(trace.status, TraceStatus::StepLimit);
        assert_eq!(trace.steps.len(), 4);
        assert_eq!(trace.final_response, STEP_LIMIT_RESPONSE);
    }

    #[test]
    fn backend_failure_keeps_trace() {
        let script = format!(
            r#"{{"interactions": [{{"input_contains": "", "steps": [{}]}}]}}"#,
            step(true, "query_for_objects", r#"{\"query\": \"book\"}"#)
        );
        let agent = Agent::new(scripted(&script));
        let mut session = SessionState::new(graph());
        let trace = agent.run("i1", "hello", None, None, &mut session);
        assert_eq!(trace.status, TraceStatus::BackendFailure);
        assert_eq!(trace.steps.len(), 1);
        assert!(trace.backend_error.unwrap().contains("exhausted"));
        assert_eq!(trace.final_response, BACKEND_FAILURE_RESPONSE);
    }

    #[test]
    fn prompt_history_counts_and_prefix() {
        let mut session = SessionState::new(graph());
        let mut trace = AgentTrace::start("i".into(), "find the book", None, None);
        let first = assemble_prompt(&session, &trace, 64);
        assert_eq!(first.prompt.matches("Observation:").count(), 0);
        assert!(first.prompt.contains("Marked object: none"));
        for i in 0..2 {
            trace.steps.push(AgentStep {
                index: i + 1,
                call_index: i,
                plan: (i == 0).then(|| "1. Find it.".to_string()),
                thought: "t".into(),
                action: ToolName::QueryForObjects,
                action_input: Map::new(),
                observation: format!("obs {i}"),
                graph_changed: false,
                revision_after: 0,
                raw: String::new(),
                retrieved: None,
            });
        }
        session.mark = Some(Click::Node { object_id: 5 });
        let third = assemble_prompt(&session, &trace, 64);
        assert_eq!(third.step, 3);
        assert_eq!(third.prompt.matches("Observation:").count(), 2);
        assert!(third.prompt.trim_end().ends_with("Observation: obs 1"));
        assert!(third.prompt.contains("Marked object: yes"));

        let mut shorter = trace.clone();
        shorter.steps.pop();
        let second = assemble_prompt(&session, &shorter, 64);
        let hist = |p: &str| p.split_once("History:\n").unwrap().1.to_string();
        assert!(hist(&third.prompt).starts_with(&hist(&second.prompt)));
        assert_eq!(assemble_prompt(&session, &trace, 64), third);
    }

    #[test]
    fn system_prompt_lists_every_tool() {
        let system = system_prompt();
        for d in descriptors() {
            assert!(system.contains(d.description));
        }
        assert!(system.contains("Plan"));
    }
}
