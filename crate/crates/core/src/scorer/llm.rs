//! Oracle backed by a chat-completions style HTTP endpoint.
//!
//! Request body (compact JSON, fields in this order):
//!
//! ```json
//! {"model":"...","temperature":0.0,"messages":[{"role":"user","content":"..."}]}
//! ```
//!
//! The reply is read from `choices[0].message.content`. The API key is sent
//! as `Authorization: Bearer <key>`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::OracleError;

use super::prompt::{
    build_answer_prompt, build_decide_prompt, build_score_prompt, parse_answers, parse_decision,
    parse_score_response, truncate, PromptConfig,
};
use super::{Decision, Oracle, Reply, ScoreRequest, StepContext};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmOracleConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Extra attempts after a transport failure or unparsable reply.
    pub retry_budget: u32,
    pub few_shot_count: usize,
    pub rubric_mode: bool,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for LlmOracleConfig {
    fn default() -> Self {
        LlmOracleConfig {
            endpoint: String::new(),
            model: "gpt-3.5-turbo".to_string(),
            temperature: 0.0,
            retry_budget: 1,
            few_shot_count: 3,
            rubric_mode: false,
            api_key_env: "OPENAI_API_KEY".to_string(),
            timeout_secs: 60,
            max_in_flight: 4,
        }
    }
}

impl LlmOracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.endpoint.trim().is_empty() {
            return Err(OracleError::Config("endpoint is required".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(OracleError::Config("temperature must be >= 0".into()));
        }
        if !matches!(self.few_shot_count, 1 | 3) {
            return Err(OracleError::Config("few_shot_count must be 1 or 3".into()));
        }
        if self.max_in_flight == 0 {
            return Err(OracleError::Config("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }

    pub fn prompt_config(&self) -> PromptConfig {
        PromptConfig {
            few_shot_count: self.few_shot_count,
            rubric_mode: self.rubric_mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [Message],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Exact bytes POSTed for `messages`.
pub fn request_body(cfg: &LlmOracleConfig, messages: &[Message]) -> Vec<u8> {
    serde_json::to_vec(&ChatRequest {
        model: &cfg.model,
        temperature: cfg.temperature,
        messages,
    })
    .expect("request serializes")
}

struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Retriable(OracleError),
    Fatal(OracleError),
}

pub struct LlmOracle {
    cfg: LlmOracleConfig,
    api_key: String,
    agent: ureq::Agent,
    gate: Gate,
    requests: AtomicU64,
}

impl LlmOracle {
    /// Fails without touching the network when the configuration is invalid
    /// or the key variable is unset.
    pub fn new(cfg: LlmOracleConfig) -> Result<Self, OracleError> {
        cfg.validate()?;
        let api_key = std::env::var(&cfg.api_key_env).map_err(|_| {
            OracleError::Config(format!("environment variable {} is not set", cfg.api_key_env))
        })?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(LlmOracle {
            gate: Gate::new(cfg.max_in_flight),
            cfg,
            api_key,
            agent,
            requests: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &LlmOracleConfig {
        &self.cfg
    }

    /// HTTP requests issued so far, retries included.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn send_once(&self, messages: &[Message]) -> Result<String, Attempt> {
        let body = request_body(&self.cfg, messages);
        let _slot = self.gate.acquire();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut resp = self
            .agent
            .post(&self.cfg.endpoint)
            .header("Content-Type", "application/json")
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send(&body[..])
            .map_err(|e| Attempt::Retriable(OracleError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retriable(OracleError::Transport(e.to_string())))?;
        if !(200..300).contains(&status) {
            let err = OracleError::Status {
                status,
                body: truncate(&text, 200),
            };
            return Err(if status >= 500 || status == 429 {
                Attempt::Retriable(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| Attempt::Retriable(OracleError::Transport(format!("malformed response: {e}"))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Retriable(OracleError::Transport("response has no choices".into())))
    }

    /// One logical request: transport failures and unparsable replies share
    /// the retry budget. When the budget runs out on a parse failure the
    /// fallback, if any, is returned.
    fn complete<T>(
        &self,
        messages: &[Message],
        parse: impl Fn(&str) -> Result<T, OracleError>,
        fallback: Option<T>,
    ) -> Result<Reply<T>, OracleError> {
        let mut retries = 0;
        loop {
            let err = match self.send_once(messages) {
                Ok(text) => match parse(&text) {
                    Ok(value) => return Ok(Reply { value, retries }),
                    Err(e) if retries < self.cfg.retry_budget => e,
                    Err(e) => {
                        return match fallback {
                            Some(value) => {
                                log::warn!("{e}; using fallback");
                                Ok(Reply { value, retries })
                            }
                            None => Err(e),
                        }
                    }
                },
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retriable(e)) if retries < self.cfg.retry_budget => e,
                Err(Attempt::Retriable(e)) => return Err(e),
            };
            log::debug!("retrying after: {err}");
            retries += 1;
        }
    }

    /// Raw completion text for `messages`.
    pub fn llm_call(&self, messages: &[Message]) -> Result<Reply<String>, OracleError> {
        self.complete(messages, |t| Ok(t.to_string()), None)
    }
}

impl Oracle for LlmOracle {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<Reply<Vec<f64>>, OracleError> {
        let prompt = build_score_prompt(
            req.question,
            req.topic,
            req.candidates,
            req.width,
            &self.cfg.prompt_config(),
        );
        let uniform = vec![1.0; req.candidates.len()];
        self.complete(
            &[Message::user(prompt)],
            |t| parse_score_response(t, req.candidates),
            Some(uniform),
        )
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Reply<Decision>, OracleError> {
        let prompt = build_decide_prompt(ctx.question, ctx.paths, ctx.entities);
        self.complete(&[Message::user(prompt)], parse_decision, Some(Decision::Continue))
    }

    fn answer(&self, ctx: &StepContext<'_>) -> Result<Reply<Vec<String>>, OracleError> {
        let prompt = build_answer_prompt(ctx.question, ctx.paths, ctx.entities);
        self.complete(
            &[Message::user(prompt)],
            parse_answers,
            Some(ctx.entities.to_vec()),
        )
    }
}
