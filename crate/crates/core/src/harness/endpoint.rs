//! Chat-completions client with tool calling.

use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use crate::env::{ToolCall, ToolSpec};

use super::{Agent, AgentError, AgentTurn, AgentView};

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    /// Full URL of the chat-completions route.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout: Duration,
    pub attempts: u32,
    /// First retry delay; doubles on every further retry.
    pub backoff: Duration,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key_env: None,
            temperature: 0.0,
            max_output_tokens: 16_384,
            timeout: Duration::from_secs(600),
            attempts: 3,
            backoff: Duration::from_secs(1),
        }
    }

    /// Rejects configurations that cannot work before any episode starts.
    pub fn check(&self) -> Result<(), String> {
        if !(self.url.starts_with("http://") || self.url.starts_with("https://")) {
            return Err(format!(
                "endpoint url `{}` must start with http:// or https://",
                self.url
            ));
        }
        if self.model.trim().is_empty() {
            return Err("model name is empty".into());
        }
        if self.attempts == 0 {
            return Err("at least one attempt is required".into());
        }
        if let Some(var) = &self.api_key_env {
            if std::env::var(var).is_err() {
                return Err(format!("environment variable {var} is not set"));
            }
        }
        Ok(())
    }
}

/// One HTTP exchange outcome, before retry policy.
enum Exchange {
    Ok(Value),
    Retryable(String),
    Fatal(String),
}

/// Thread-safe; share one per suite.
#[derive(Debug, Clone)]
pub struct EndpointClient {
    config: EndpointConfig,
    http: ureq::Agent,
    api_key: Option<String>,
}

impl EndpointClient {
    pub fn new(config: EndpointConfig) -> Result<Self, String> {
        config.check()?;
        let http: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = config.api_key_env.as_ref().and_then(|v| std::env::var(v).ok());
        Ok(Self { config, http, api_key })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn exchange(&self, body: &Value) -> Exchange {
        let mut req = self
            .http
            .post(&self.config.url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Exchange::Retryable(e.to_string()),
        };
        let status = resp.status().as_u16();
        let parsed: Result<Value, _> = resp.body_mut().read_json();
        match (status, parsed) {
            (200..=299, Ok(v)) => Exchange::Ok(v),
            (200..=299, Err(e)) => Exchange::Fatal(format!("unreadable response: {e}")),
            (429 | 500..=599, _) => Exchange::Retryable(format!("HTTP {status}")),
            (_, Ok(v)) => Exchange::Fatal(format!("HTTP {status}: {v}")),
            (_, Err(_)) => Exchange::Fatal(format!("HTTP {status}")),
        }
    }

    /// Posts with bounded retries and exponential backoff.
    pub fn complete(&self, body: &Value) -> Result<Value, AgentError> {
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for attempt in 1..=self.config.attempts {
            match self.exchange(body) {
                Exchange::Ok(v) => return Ok(v),
                Exchange::Fatal(e) => return Err(AgentError::Endpoint(e)),
                Exchange::Retryable(e) => last = e,
            }
            if attempt < self.config.attempts {
                thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(AgentError::Endpoint(format!(
            "gave up after {} attempts: {last}",
            self.config.attempts
        )))
    }

    pub fn request_body(&self, messages: &[Value], tools: &[ToolSpec]) -> Value {
        json!({
            "model": self.config.model,
            "messages": messages,
            "tools": tools.iter().map(ToolSpec::to_function_json).collect::<Vec<_>>(),
            "tool_choice": "auto",
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        })
    }
}

const OPENING: &str = "Begin. Fill every hidden cell, then call done.";
const TRUNCATION_NOTE: &str = "Your previous reply hit the output limit and was discarded. Reply more briefly.";

/// A model behind a chat-completions endpoint.
pub struct EndpointAgent {
    client: EndpointClient,
    messages: Vec<Value>,
    issued: Vec<String>,
    seen: usize,
}

impl EndpointAgent {
    pub fn new(client: EndpointClient) -> Self {
        Self {
            client,
            messages: Vec::new(),
            issued: Vec::new(),
            seen: 0,
        }
    }

    /// Feeds back the results of the previous turn's calls.
    fn push_results(&mut self, view: &AgentView<'_>) {
        let fresh = &view.transcript[self.seen.min(view.transcript.len())..];
        for (i, id) in self.issued.drain(..).enumerate() {
            let content = match fresh.get(i) {
                Some(r) => json!({"ok": r.ok, "result": r.payload}).to_string(),
                None => json!({"ok": false, "result": "not executed"}).to_string(),
            };
            self.messages
                .push(json!({"role": "tool", "tool_call_id": id, "content": content}));
        }
        self.seen = view.transcript.len();
    }
}

/// Assistant message, `(call id, call)` pairs, completion tokens, truncated.
pub type ParsedCompletion = (Value, Vec<(String, ToolCall)>, u64, bool);

/// Splits a completion into tool calls, token usage and truncation.
pub fn parse_completion(v: &Value) -> Result<ParsedCompletion, AgentError> {
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| AgentError::Endpoint(format!("response has no choices: {v}")))?;
    let message = choice
        .get("message")
        .cloned()
        .unwrap_or_else(|| json!({"role": "assistant"}));
    let truncated = choice.get("finish_reason").and_then(Value::as_str) == Some("length");
    let tokens = v
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64)
        .unwrap_or(0);
    let mut calls = Vec::new();
    if let Some(list) = message.get("tool_calls").and_then(Value::as_array) {
        for (i, tc) in list.iter().enumerate() {
            let id = tc
                .get("id")
                .and_then(Value::as_str)
                .map_or_else(|| format!("call_{i}"), str::to_string);
            let name = tc.pointer("/function/name").and_then(Value::as_str).unwrap_or_default();
            let arguments = match tc.pointer("/function/arguments") {
                Some(Value::String(s)) => serde_json::from_str(s).unwrap_or_else(|_| json!({})),
                Some(obj @ Value::Object(_)) => obj.clone(),
                _ => json!({}),
            };
            calls.push((id, ToolCall::new(name, arguments)));
        }
    }
    Ok((message, calls, tokens, truncated))
}

impl Agent for EndpointAgent {
    fn turn(&mut self, view: &AgentView<'_>) -> Result<AgentTurn, AgentError> {
        if self.messages.is_empty() {
            self.messages
                .push(json!({"role": "system", "content": view.system_prompt}));
            self.messages.push(json!({"role": "user", "content": OPENING}));
        } else {
            self.push_results(view);
        }
        let body = self.client.request_body(&self.messages, view.tools);
        let response = self.client.complete(&body)?;
        let (message, calls, completion_tokens, truncated) = parse_completion(&response)?;
        if truncated {
            self.messages.push(json!({"role": "user", "content": TRUNCATION_NOTE}));
            return Ok(AgentTurn {
                calls: Vec::new(),
                completion_tokens,
                truncated: true,
            });
        }
        self.messages.push(message);
        self.issued = calls.iter().map(|(id, _)| id.clone()).collect();
        self.seen = view.transcript.len();
        Ok(AgentTurn {
            calls: calls.into_iter().map(|(_, c)| c).collect(),
            completion_tokens,
            truncated: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tool_calls_and_usage() {
        let v = json!({
            "choices": [{
                "finish_reason": "tool_calls",
                "message": {
                    "role": "assistant",
                    "tool_calls": [
                        {"id": "a", "type": "function",
                         "function": {"name": "get_slot_id", "arguments": "{\"row\": 1, \"col\": 2}"}},
                        {"id": "b", "type": "function",
                         "function": {"name": "done", "arguments": "not json"}}
                    ]
                }
            }],
            "usage": {"completion_tokens": 42}
        });
        let (_, calls, tokens, truncated) = parse_completion(&v).unwrap();
        assert_eq!(tokens, 42);
        assert!(!truncated);
        assert_eq!(calls[0].1, ToolCall::new("get_slot_id", json!({"row": 1, "col": 2})));
        assert_eq!(calls[1].1, ToolCall::new("done", json!({})));
    }

    #[test]
    fn length_finish_is_truncation() {
        let v = json!({"choices": [{"finish_reason": "length", "message": {"role": "assistant", "content": "..."}}]});
        assert!(parse_completion(&v).unwrap().3);
        assert!(parse_completion(&json!({})).is_err());
    }

    #[test]
    fn config_checks() {
        assert!(EndpointConfig::new("http://localhost:1/v1/chat/completions", "m")
            .check()
            .is_ok());
        assert!(EndpointConfig::new("localhost:1", "m").check().is_err());
        assert!(EndpointConfig::new("http://x", " ").check().is_err());
        let mut c = EndpointConfig::new("http://x", "m");
        c.api_key_env = Some("GRIDBENCH_SURELY_UNSET_VARIABLE".into());
        assert!(c.check().is_err());
    }
}
