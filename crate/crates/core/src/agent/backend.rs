use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub system: String,
    pub prompt: String,
    /// 1-based step the request is for.
    pub step: usize,
    /// 0-based count of backend calls made earlier in the same interaction.
    pub call_index: usize,
    pub user_input: String,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempts: {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("no scripted interaction matches input '{0}'")]
    NoScript(String),
    #[error("script exhausted for '{input}' at call {call_index}")]
    ScriptExhausted { input: String, call_index: usize },
    #[error(
        "script drift for '{input}' at call {call_index}: prompt does not contain {expected:?}"
    )]
    ScriptDrift {
        input: String,
        call_index: usize,
        expected: String,
    },
}

/// A language model completing one prompt at a time.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

/// Either a single string or a list of lines joined with newlines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptText {
    One(String),
    Lines(Vec<String>),
}

impl ScriptText {
    pub fn text(&self) -> String {
        match self {
            ScriptText::One(s) => s.clone(),
            ScriptText::Lines(lines) => lines.join("\n"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptVariant {
    pub when_prompt_contains: String,
    pub response: ScriptText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    #[serde(default)]
    pub response: Option<ScriptText>,
    #[serde(default)]
    pub variants: Vec<ScriptVariant>,
    #[serde(default)]
    pub expect_prompt_contains: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptInteraction {
    /// Case-insensitive substring of the user input; empty matches anything.
    pub input_contains: String,
    pub steps: Vec<ScriptStep>,
    /// Replay the last step forever instead of failing when calls run out.
    #[serde(default)]
    pub repeat_last: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub description: String,
    pub interactions: Vec<ScriptInteraction>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid scenario {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Replays canned responses, selected by user input and call index. Holds
/// no state between calls, so replays are deterministic.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    scenario: Scenario,
}

impl ScriptedBackend {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        for (i, interaction) in scenario.interactions.iter().enumerate() {
            if interaction.steps.is_empty() {
                return Err(ScenarioError::Invalid(format!(
                    "interaction {i} has no steps"
                )));
            }
            for (j, step) in interaction.steps.iter().enumerate() {
                if step.response.is_none() && step.variants.is_empty() {
                    return Err(ScenarioError::Invalid(format!(
                        "interaction {i} step {j} has neither response nor variants"
                    )));
                }
            }
        }
        Ok(Self { scenario })
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario = serde_json::from_str(text).map_err(|source| ScenarioError::Json {
            path: "<inline>".into(),
            source,
        })?;
        Self::new(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: display.clone(),
            source,
        })?;
        let scenario = serde_json::from_str(&text).map_err(|source| ScenarioError::Json {
            path: display,
            source,
        })?;
        Self::new(scenario)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let input = request.user_input.to_lowercase();
        let interaction = self
            .scenario
            .interactions
            .iter()
            .find(|i| input.contains(&i.input_contains.to_lowercase()))
            .ok_or_else(|| BackendError::NoScript(request.user_input.clone()))?;
        let step = match interaction.steps.get(request.call_index) {
            Some(step) => step,
            None if interaction.repeat_last => interaction.steps.last().expect("validated"),
            None => {
                return Err(BackendError::ScriptExhausted {
                    input: request.user_input.clone(),
                    call_index: request.call_index,
                })
            }
        };
        if let Some(missing) = step
            .expect_prompt_contains
            .iter()
            .find(|s| !request.prompt.contains(s.as_str()))
        {
            return Err(BackendError::ScriptDrift {
                input: request.user_input.clone(),
                call_index: request.call_index,
                expected: missing.clone(),
            });
        }
        let response = step
            .variants
            .iter()
            .find(|v| request.prompt.contains(&v.when_prompt_contains))
            .map(|v| &v.response)
            .or(step.response.as_ref())
            .ok_or_else(|| BackendError::ScriptDrift {
                input: request.user_input.clone(),
                call_index: request.call_index,
                expected: step
                    .variants
                    .iter()
                    .map(|v| v.when_prompt_contains.as_str())
                    .collect::<Vec<_>>()
                    .join(" | "),
            })?;
        Ok(BackendResponse {
            raw: response.text(),
        })
    }
}
