//! Chat-completions HTTP backend.
//!
//! Speaks the common `/v1/chat/completions` request/response subset:
//! model, messages, temperature and max_tokens in; `choices[0].message.content`
//! out. Anything else in a 2xx response is a backend error.

use async_trait::async_trait;
use serde::Serialize;
use serde_json::Value;

use super::{BackendConfig, ChatBackend, ChatRequest, GatewayError, Speaker};

const EXCERPT_LEN: usize = 200;

#[derive(Debug, Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    bearer: Option<String>,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        let base = cfg
            .base_url
            .as_deref()
            .ok_or_else(|| GatewayError::Config("http backend requires base_url".into()))?;
        let bearer = match &cfg.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| GatewayError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: format!("{}/v1/chat/completions", base.trim_end_matches('/')),
            model: cfg.model_name.clone(),
            bearer,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

fn role(speaker: Speaker) -> &'static str {
    match speaker {
        Speaker::System => "system",
        Speaker::User => "user",
        Speaker::Assistant => "assistant",
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(EXCERPT_LEN).collect()
}

/// Pulls `choices[0].message.content` out of a response body.
pub(crate) fn extract_content(body: &str) -> Option<String> {
    let value: Value = serde_json::from_str(body).ok()?;
    value.get("choices")?.get(0)?.get("message")?.get("content")?.as_str().map(str::to_string)
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn send(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let body = WireRequest {
            model: &self.model,
            messages: req.messages.iter().map(|m| WireMessage { role: role(m.speaker), content: &m.content }).collect(),
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let mut builder = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.bearer {
            builder = builder.bearer_auth(token);
        }
        let transport = |e: reqwest::Error| GatewayError::Transport { tag: req.tag.clone(), message: e.to_string() };
        let response = builder.send().await.map_err(transport)?;
        let status = response.status();
        let text = response.text().await.map_err(transport)?;
        if !status.is_success() {
            return Err(GatewayError::Backend { tag: req.tag.clone(), status: status.as_u16(), excerpt: excerpt(&text) });
        }
        extract_content(&text).ok_or_else(|| GatewayError::Backend {
            tag: req.tag.clone(),
            status: status.as_u16(),
            excerpt: format!("missing choices[0].message.content: {}", excerpt(&text)),
        })
    }

    fn identity(&self) -> String {
        format!("http:{}@{}", self.model, self.endpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_extraction() {
        assert_eq!(
            extract_content(r#"{"choices":[{"message":{"role":"assistant","content":"\"Yes\". ok"}}]}"#).as_deref(),
            Some("\"Yes\". ok")
        );
        assert_eq!(extract_content(r#"{"choices":[]}"#), None);
        assert_eq!(extract_content(r#"{"choices":[{"message":{"content":5}}]}"#), None);
        assert_eq!(extract_content("not json"), None);
    }

    #[test]
    fn endpoint_normalisation() {
        let b = HttpBackend::new(&BackendConfig::http("http://localhost:8000/", "qwen")).unwrap();
        assert_eq!(b.endpoint(), "http://localhost:8000/v1/chat/completions");
    }

    #[test]
    fn missing_key_env_is_config_error() {
        let cfg = BackendConfig { api_key_env: Some("ELIGO_TEST_SURELY_UNSET_VAR".into()), ..BackendConfig::http("http://x", "m") };
        assert!(matches!(HttpBackend::new(&cfg), Err(GatewayError::Config(_))));
    }
}
