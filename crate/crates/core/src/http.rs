//! Driver for OpenAI-compatible chat-completions endpoints, plus an
//! LLM-backed query rewriter built on the same client.

use std::collections::HashMap;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classifier::ObservedInvocation;
use crate::driver::{parse_arguments_best_effort, AgentContext, AgentDriver, AgentStep, DriverError, REACT_TEMPLATE};
use crate::perturb_query::{RewriteError, Rewriter, RewriterKind};

fn default_api_key_env() -> String {
    "PARAMFUZZ_API_KEY".into()
}

fn default_rate() -> f64 {
    60.0
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    5
}

fn default_backoff_base() -> u64 {
    500
}

fn default_backoff_cap() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL up to, not including, `/chat/completions`.
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_rate")]
    pub rate_per_minute: f64,
    /// Name of the environment variable holding the API key. Requests go
    /// out without credentials when it is unset.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_cap")]
    pub backoff_cap_ms: u64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            temperature: 0.0,
            rate_per_minute: default_rate(),
            api_key_env: default_api_key_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_base_ms: default_backoff_base(),
            backoff_cap_ms: default_backoff_cap(),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .backoff_base_ms
            .saturating_mul(1u64.checked_shl(attempt).unwrap_or(u64::MAX))
            .min(self.backoff_cap_ms);
        Duration::from_millis(ms)
    }
}

/// Spaces requests evenly so that at most `rate_per_minute` start per
/// minute, across every thread sharing the limiter.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(rate: f64) -> Self {
        let interval = if rate > 0.0 && rate.is_finite() {
            Duration::from_secs_f64(60.0 / rate)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Blocking chat-completions client with retries and a shared rate limit.
pub struct ChatClient {
    config: EndpointConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
    api_key: Option<String>,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(true)
            .build();
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending requests without credentials", config.api_key_env);
        }
        ChatClient {
            limiter: RateLimiter::per_minute(config.rate_per_minute),
            agent: ureq::Agent::new_with_config(agent_config),
            api_key,
            config,
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Posts one completion request, retrying transient failures with
    /// exponential backoff.
    pub fn complete(&self, body: &Value) -> Result<Value, DriverError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut attempt = 0;
        loop {
            self.limiter.acquire();
            let mut request = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
            let retryable = match request.send_json(body) {
                Ok(mut response) => {
                    return response
                        .body_mut()
                        .read_json::<Value>()
                        .map_err(|e| DriverError::Protocol(format!("response is not JSON: {e}")));
                }
                Err(ureq::Error::StatusCode(code @ (401 | 403))) => return Err(DriverError::AuthFailure(code)),
                Err(ureq::Error::StatusCode(429)) => DriverError::RateLimited { attempts: attempt + 1 },
                Err(ureq::Error::StatusCode(code)) if code >= 500 => DriverError::Transport(format!("HTTP {code}")),
                Err(ureq::Error::StatusCode(code)) => return Err(DriverError::Protocol(format!("HTTP {code}"))),
                Err(e) => DriverError::Transport(e.to_string()),
            };
            if attempt >= self.config.max_retries {
                return Err(retryable);
            }
            log::debug!("retrying after {retryable}");
            thread::sleep(self.config.backoff(attempt));
            attempt += 1;
        }
    }
}

pub struct HttpDriver {
    client: ChatClient,
}

impl HttpDriver {
    pub fn new(config: EndpointConfig) -> Self {
        HttpDriver {
            client: ChatClient::new(config),
        }
    }

    /// The request body for the next step of `ctx`.
    pub fn request_body(&self, ctx: &AgentContext) -> Value {
        let mut messages = vec![
            json!({"role": "system", "content": REACT_TEMPLATE}),
            json!({"role": "user", "content": ctx.query}),
        ];
        for (i, step) in ctx.steps.iter().enumerate() {
            let call_id = format!("call_{i}");
            messages.push(json!({
                "role": "assistant",
                "content": step.thought,
                "tool_calls": [{
                    "id": call_id,
                    "type": "function",
                    "function": {"name": step.invocation.tool_name, "arguments": step.invocation.raw_text},
                }],
            }));
            messages.push(json!({"role": "tool", "tool_call_id": call_id, "content": step.observation}));
        }
        let config = self.client.config();
        let mut body = json!({
            "model": config.model,
            "temperature": config.temperature,
            "messages": messages,
        });
        if ctx.declarations.as_array().is_some_and(|a| !a.is_empty()) {
            body["tools"] = ctx.declarations.clone();
        }
        body
    }
}

/// Interprets one chat-completions response as an agent step. Only the
/// first tool call is used; the loop runs one invocation per step.
pub fn parse_completion(response: &Value) -> Result<AgentStep, DriverError> {
    let message = response
        .pointer("/choices/0/message")
        .ok_or_else(|| DriverError::Protocol("response has no choices[0].message".into()))?;
    let thought = message.get("content").and_then(Value::as_str).unwrap_or("").to_string();
    let Some(call) = message.pointer("/tool_calls/0/function") else {
        return Ok(AgentStep::Final {
            answer: thought,
            thought: String::new(),
        });
    };
    let tool_name = call
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| DriverError::Protocol("tool call without a function name".into()))?
        .to_string();
    let raw_text = match call.get("arguments") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => other.to_string(),
    };
    let (arguments, parse_error) = parse_arguments_best_effort(&raw_text);
    Ok(AgentStep::Invoke {
        thought,
        invocation: ObservedInvocation {
            tool_name,
            arguments,
            raw_text,
            parse_error,
        },
    })
}

impl AgentDriver for HttpDriver {
    fn id(&self) -> String {
        format!("http:{}", self.client.config().model)
    }

    fn next_step(&self, ctx: &AgentContext) -> Result<AgentStep, DriverError> {
        let response = self.client.complete(&self.request_body(ctx))?;
        parse_completion(&response)
    }
}

/// Query rewriter backed by a chat model. Answers are cached per input so
/// a campaign sees one rewrite per value.
pub struct ChatRewriter {
    client: ChatClient,
    kind: RewriterKind,
    cache: Mutex<HashMap<String, String>>,
}

impl ChatRewriter {
    pub fn new(config: EndpointConfig, kind: RewriterKind) -> Self {
        ChatRewriter {
            client: ChatClient::new(config),
            kind,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn instruction(&self) -> &'static str {
        match self.kind {
            RewriterKind::Complicate => {
                "Rewrite the given value as a longer, indirect phrase that still denotes exactly the same value. Reply with the phrase only."
            }
            RewriterKind::Noise => {
                "Write one short sentence that mentions something plausible but unrelated to the given value. Reply with the sentence only."
            }
        }
    }
}

impl Rewriter for ChatRewriter {
    fn kind(&self) -> RewriterKind {
        self.kind
    }

    fn name(&self) -> String {
        format!("chat:{}", self.client.config().model)
    }

    fn rewrite(&self, value: &str) -> Result<String, RewriteError> {
        if let Some(hit) = self.cache.lock().expect("rewriter cache lock").get(value) {
            return Ok(hit.clone());
        }
        let config = self.client.config();
        let body = json!({
            "model": config.model,
            "temperature": 0.0,
            "messages": [
                {"role": "system", "content": self.instruction()},
                {"role": "user", "content": value},
            ],
        });
        let response = self.client.complete(&body).map_err(|e| RewriteError(e.to_string()))?;
        let text = response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::trim)
            .ok_or_else(|| RewriteError("completion has no text".into()))?
            .to_string();
        self.cache
            .lock()
            .expect("rewriter cache lock")
            .insert(value.to_string(), text.clone());
        Ok(text)
    }
}
