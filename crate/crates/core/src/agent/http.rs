use std::env;
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::backend::{Backend, BackendError, BackendRequest, BackendResponse};

pub const ENV_BASE_URL: &str = "SGALIGN_BASE_URL";
pub const ENV_MODEL: &str = "SGALIGN_MODEL";
pub const ENV_API_KEY: &str = "SGALIGN_API_KEY";
pub const ENV_TIMEOUT: &str = "SGALIGN_TIMEOUT_SECS";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Base URL up to and including the version segment, e.g.
    /// `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }

    pub fn from_env() -> Result<Self, BackendError> {
        let required = |key: &str| {
            env::var(key)
                .ok()
                .filter(|v| !v.trim().is_empty())
                .ok_or_else(|| BackendError::Config(format!("{key} is not set")))
        };
        let mut config = Self::new(required(ENV_BASE_URL)?, required(ENV_MODEL)?);
        config.api_key = env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        if let Ok(secs) = env::var(ENV_TIMEOUT) {
            let secs: u64 = secs.trim().parse().map_err(|_| {
                BackendError::Config(format!("{ENV_TIMEOUT} must be whole seconds"))
            })?;
            config.timeout = Duration::from_secs(secs);
        }
        Ok(config)
    }
}

/// OpenAI-compatible chat-completion client.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self { config, agent }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn attempt(&self, request: &BackendRequest) -> Result<BackendResponse, Attempt> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.prompt},
            ],
            "max_tokens": request.max_tokens,
            "temperature": 0,
            "stop": ["\nObservation:"],
        });
        let mut call = self.agent.post(&self.endpoint());
        if let Some(key) = &self.config.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        match call.send_json(body) {
            Ok(response) => {
                let completion: Completion = response
                    .into_json()
                    .map_err(|e| Attempt::Retry(format!("unreadable response body: {e}")))?;
                let content = completion
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| {
                        Attempt::Fatal(BackendError::Rejected(
                            "response has no message content".into(),
                        ))
                    })?;
                Ok(BackendResponse { raw: content })
            }
            Err(ureq::Error::Status(code, response)) => {
                let detail = response.into_string().unwrap_or_default();
                let message = format!(
                    "HTTP {code}: {}",
                    detail.chars().take(200).collect::<String>()
                );
                if code == 429 || code >= 500 {
                    Err(Attempt::Retry(message))
                } else {
                    Err(Attempt::Fatal(BackendError::Rejected(message)))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(Attempt::Retry(t.to_string())),
        }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let attempts = self.config.max_attempts.max(1);
        let mut backoff = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.attempt(request) {
                Ok(response) => return Ok(response),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    tracing::warn!(attempt, %message, "backend call failed");
                    last = message;
                    if attempt < attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(BackendError::Unavailable {
            attempts,
            message: last,
        })
    }
}
