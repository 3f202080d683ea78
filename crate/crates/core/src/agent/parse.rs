//! Parsing of model output into a tool call.
//!
//! Grammar, one field per line:
//!
//! ```text
//! Plan:
//! 1. ...
//! 2. ...
//! Thought: ...
//! Action: <tool name>
//! Action Input: {"single": "line json"}
//! ```

use serde_json::{Map, Value};
use thiserror::Error;

use crate::tools::{descriptors, ToolName};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAction {
    pub plan: Option<String>,
    pub thought: String,
    pub action: ToolName,
    pub action_input: Map<String, Value>,
}

/// Recoverable parse errors. The display text is fed back as the next
/// observation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("Error: missing '{0}:' line. Answer with Thought, Action and Action Input lines.")]
    MissingField(&'static str),
    #[error("Error: the first step must start with a 'Plan:' block of numbered lines.")]
    MissingPlan,
    #[error("Error: unknown tool '{name}'. Available tools: {available}.")]
    UnknownTool { name: String, available: String },
    #[error("Error: Action Input must be a single-line JSON object ({0}).")]
    MalformedInput(String),
    #[error("Error: {tool} is missing the required parameter '{param}' ({kind}).")]
    MissingParam {
        tool: ToolName,
        param: &'static str,
        kind: &'static str,
    },
    #[error("Error: parameter '{param}' of {tool} must be {kind}.")]
    WrongType {
        tool: ToolName,
        param: &'static str,
        kind: &'static str,
    },
    #[error("Error: {tool} has no parameter '{param}'. Expected parameters: {expected}.")]
    UnexpectedParam {
        tool: ToolName,
        param: String,
        expected: String,
    },
}

fn available_tools() -> String {
    descriptors()
        .iter()
        .map(|d| d.name)
        .collect::<Vec<_>>()
        .join(", ")
}

fn field<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(name)?;
    rest.strip_prefix(':').map(str::trim)
}

fn is_numbered(line: &str) -> bool {
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    digits > 0 && matches!(line[digits..].chars().next(), Some('.') | Some(')'))
}

pub fn parse_action(raw: &str) -> Result<ParsedAction, ParseError> {
    let lines: Vec<&str> = raw.lines().map(str::trim).collect();
    let mut plan: Option<Vec<String>> = None;
    let mut thought: Option<Vec<String>> = None;
    let mut action = None;
    let mut input = None;

    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = field(line, "Plan") {
            let mut items: Vec<String> = Vec::new();
            if !rest.is_empty() {
                items.push(rest.to_string());
            }
            while i + 1 < lines.len() && is_numbered(lines[i + 1]) {
                i += 1;
                items.push(lines[i].to_string());
            }
            plan = Some(items);
        } else if let Some(rest) = field(line, "Thought") {
            let mut text = vec![rest.to_string()];
            while i + 1 < lines.len()
                && !lines[i + 1].is_empty()
                && field(lines[i + 1], "Action").is_none()
                && field(lines[i + 1], "Action Input").is_none()
            {
                i += 1;
                text.push(lines[i].to_string());
            }
            thought = Some(text);
        } else if let Some(rest) = field(line, "Action Input") {
            input = Some(rest);
            break;
        } else if let Some(rest) = field(line, "Action") {
            action = Some(rest);
        }
        i += 1;
    }

    let thought = thought
        .map(|t| t.join(" ").trim().to_string())
        .filter(|t| !t.is_empty())
        .ok_or(ParseError::MissingField("Thought"))?;
    let name = action
        .map(|a| a.trim_matches('`'))
        .filter(|a| !a.is_empty())
        .ok_or(ParseError::MissingField("Action"))?;
    let action: ToolName = name.parse().map_err(|_| ParseError::UnknownTool {
        name: name.to_string(),
        available: available_tools(),
    })?;
    let input = input.ok_or(ParseError::MissingField("Action Input"))?;
    let action_input = match serde_json::from_str::<Value>(input) {
        Ok(Value::Object(map)) => map,
        Ok(other) => {
            return Err(ParseError::MalformedInput(format!(
                "got {}",
                json_kind(&other)
            )))
        }
        Err(e) => return Err(ParseError::MalformedInput(e.to_string())),
    };
    check_params(action, &action_input)?;

    let plan = plan.map(|p| p.join("\n")).filter(|p| !p.trim().is_empty());
    Ok(ParsedAction {
        plan,
        thought,
        action,
        action_input,
    })
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Validates arguments against the tool descriptor.
pub fn check_params(tool: ToolName, input: &Map<String, Value>) -> Result<(), ParseError> {
    let params = tool.descriptor().params;
    for p in params {
        match input.get(p.name) {
            None => {
                return Err(ParseError::MissingParam {
                    tool,
                    param: p.name,
                    kind: p.kind.type_name(),
                })
            }
            Some(v) if !p.kind.accepts(v) => {
                return Err(ParseError::WrongType {
                    tool,
                    param: p.name,
                    kind: p.kind.type_name(),
                })
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = input
        .keys()
        .find(|k| !params.iter().any(|p| p.name == k.as_str()))
    {
        let expected = if params.is_empty() {
            "none".to_string()
        } else {
            params.iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
        };
        return Err(ParseError::UnexpectedParam {
            tool,
            param: extra.clone(),
            expected,
        });
    }
    Ok(())
}
