//! OpenAI-compatible HTTP backend.
//!
//! Sampling goes to `{base_url}/chat/completions` (one user message, no
//! system message) or `{base_url}/completions`. Scoring uses
//! `{base_url}/completions` with `echo: true, max_tokens: 0, logprobs: 0` and
//! sums `choices[0].logprobs.token_logprobs`, skipping the leading `null`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendCapabilities, BackendError, Completion, SampleRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiKind {
    Chat,
    Completions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key; keys never live in config.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_api")]
    pub api: ApiKind,
    #[serde(default)]
    pub logprobs: bool,
    #[serde(default = "default_batch")]
    pub max_batch_n: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_api() -> ApiKind {
    ApiKind::Chat
}

fn default_batch() -> usize {
    10
}

fn default_timeout() -> u64 {
    120
}

pub struct OpenAiBackend {
    id: String,
    config: OpenAiConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiBackend {
    pub fn new(id: &str, config: OpenAiConfig) -> Self {
        let api_key = config
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        OpenAiBackend {
            id: id.to_string(),
            config,
            api_key,
            agent,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}/{path}", self.config.base_url.trim_end_matches('/'));
        let mut req = self
            .agent
            .post(&url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| BackendError::Transport(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(format!("{url}: reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(BackendError::Transport(format!(
                "{url}: http {status}: {text}"
            )));
        }
        if status >= 400 {
            return Err(BackendError::Rejected(format!(
                "{url}: http {status}: {text}"
            )));
        }
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Rejected(format!("{url}: invalid json: {e}")))
    }
}

pub(crate) fn sampling_body(model: &str, api: ApiKind, request: &SampleRequest<'_>) -> Value {
    let p = request.params;
    let mut body = json!({
        "model": model,
        "n": request.indices.len(),
        "temperature": p.temperature,
        "top_p": p.top_p,
        "top_k": p.top_k,
        "max_tokens": p.max_tokens,
    });
    if let Some(stop) = &p.stop {
        body["stop"] = json!([stop]);
    }
    match api {
        ApiKind::Chat => body["messages"] = json!([{ "role": "user", "content": request.prompt }]),
        ApiKind::Completions => body["prompt"] = json!(request.prompt),
    }
    body
}

/// Servers strip the stop sequence; it is restored when generation ended on it.
pub(crate) fn parse_completions(
    value: &Value,
    api: ApiKind,
    stop: Option<&str>,
) -> Vec<Completion> {
    let Some(choices) = value["choices"].as_array() else {
        return Vec::new();
    };
    let mut indexed: Vec<(u64, Completion)> = choices
        .iter()
        .enumerate()
        .map(|(pos, choice)| {
            let idx = choice["index"].as_u64().unwrap_or(pos as u64);
            let finish = choice["finish_reason"].as_str().unwrap_or("");
            let content = match api {
                ApiKind::Chat => choice["message"]["content"].as_str(),
                ApiKind::Completions => choice["text"].as_str(),
            };
            let completion = match content {
                _ if finish == "content_filter" => Completion::Refusal("content_filter".into()),
                None => Completion::Refusal("no content".into()),
                Some(t) if t.trim().is_empty() => Completion::Refusal("empty".into()),
                Some(t) => {
                    let mut t = t.to_string();
                    if let Some(stop) = stop {
                        if finish == "stop" && !t.ends_with(stop) {
                            t.push_str(stop);
                        }
                    }
                    Completion::Text(t)
                }
            };
            (idx, completion)
        })
        .collect();
    indexed.sort_by_key(|(i, _)| *i);
    indexed.into_iter().map(|(_, c)| c).collect()
}

pub(crate) fn parse_token_logprobs(value: &Value) -> Result<Vec<f64>, BackendError> {
    let lps = value["choices"][0]["logprobs"]["token_logprobs"]
        .as_array()
        .ok_or_else(|| BackendError::Rejected("response has no token_logprobs".into()))?;
    Ok(lps.iter().filter_map(Value::as_f64).collect())
}

impl Backend for OpenAiBackend {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            supports_sampling: true,
            supports_logprobs: self.config.logprobs,
            max_batch_n: self.config.max_batch_n.max(1),
        }
    }

    fn sample_batch(&self, request: &SampleRequest<'_>) -> Result<Vec<Completion>, BackendError> {
        let body = sampling_body(&self.config.model, self.config.api, request);
        let path = match self.config.api {
            ApiKind::Chat => "chat/completions",
            ApiKind::Completions => "completions",
        };
        let value = self.post(path, &body)?;
        Ok(parse_completions(
            &value,
            self.config.api,
            request.params.stop.as_deref(),
        ))
    }

    fn token_logprobs(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        if !self.config.logprobs {
            return Err(BackendError::Unsupported("logprobs"));
        }
        let body = json!({
            "model": self.config.model,
            "prompt": text,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
        });
        let value = self.post("completions", &body)?;
        parse_token_logprobs(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genclient::SamplingParams;

    #[test]
    fn chat_body_carries_hyperparameters() {
        let params = SamplingParams {
            n: 10,
            ..Default::default()
        };
        let req = SampleRequest {
            prompt: "Describe",
            params: &params,
            indices: &[0, 1, 2],
        };
        let b = sampling_body("gpt-4", ApiKind::Chat, &req);
        assert_eq!(b["n"], 3);
        assert_eq!(b["temperature"], 1.0);
        assert_eq!(b["top_p"], 0.95);
        assert_eq!(b["top_k"], 50);
        assert_eq!(b["max_tokens"], 30);
        assert_eq!(b["stop"], json!(["."]));
        assert_eq!(
            b["messages"],
            json!([{"role": "user", "content": "Describe"}])
        );
        assert!(b.get("prompt").is_none());
    }

    #[test]
    fn parses_choices_and_restores_stop() {
        let v = json!({"choices": [
            {"index": 1, "message": {"content": " b"}, "finish_reason": "length"},
            {"index": 0, "message": {"content": " a"}, "finish_reason": "stop"},
            {"index": 2, "message": {"content": null}, "finish_reason": "content_filter"},
        ]});
        let out = parse_completions(&v, ApiKind::Chat, Some("."));
        assert_eq!(
            out,
            [
                Completion::Text(" a.".into()),
                Completion::Text(" b".into()),
                Completion::Refusal("content_filter".into())
            ]
        );
    }

    #[test]
    fn parses_echo_logprobs() {
        let v = json!({"choices": [{"logprobs": {"token_logprobs": [null, -1.5, -0.25]}}]});
        assert_eq!(parse_token_logprobs(&v).unwrap(), [-1.5, -0.25]);
        assert!(parse_token_logprobs(&json!({})).is_err());
    }
}
