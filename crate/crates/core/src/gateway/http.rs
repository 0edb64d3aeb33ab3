use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Serialize;
use serde_json::Value;

use super::{excerpt, AttemptError, Backend, FinishReason, GatewayError, GenerationRequest, GenerationResponse};

/// Completion-API client: `POST {endpoint}` with a JSON body of
/// `model`, `prompt`, `temperature`, `max_tokens` and `stop`, bearer auth.
///
/// Accepts `choices[0].text` (completions) or `choices[0].message.content`
/// (chat) plus an optional `usage` object.
pub struct HttpBackend {
    client: Client,
    endpoint: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop: Option<&'a [String]>,
}

impl HttpBackend {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let endpoint = endpoint.into();
        reqwest::Url::parse(&endpoint)
            .map_err(|e| GatewayError::Config(format!("endpoint {endpoint:?}: {e}")))?;
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            api_key,
        })
    }
}

fn is_retryable_status(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS
        || status == StatusCode::REQUEST_TIMEOUT
        || status.is_server_error()
}

fn protocol(message: &str, body: &str) -> AttemptError {
    AttemptError::Fatal(GatewayError::Protocol {
        message: message.into(),
        excerpt: excerpt(body),
    })
}

pub(crate) fn parse_completion(body: &str) -> Result<GenerationResponse, AttemptError> {
    let value: Value = serde_json::from_str(body).map_err(|e| protocol(&format!("invalid JSON: {e}"), body))?;
    let choice = value
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| protocol("missing choices[0]", body))?;
    let text = choice
        .get("text")
        .and_then(Value::as_str)
        .or_else(|| choice.pointer("/message/content").and_then(Value::as_str))
        .ok_or_else(|| protocol("choices[0] has no text", body))?;
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Length,
        Some("stop") | Some("eos") | None => FinishReason::Stop,
        Some(_) => FinishReason::Error,
    };
    let usage = |key: &str| {
        value
            .get("usage")
            .and_then(|u| u.get(key))
            .and_then(Value::as_u64)
            .unwrap_or(0)
    };
    Ok(GenerationResponse {
        text: text.to_string(),
        finish_reason,
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
        latency: Duration::ZERO,
        retries: 0,
    })
}

impl Backend for HttpBackend {
    fn attempt(&self, request: &GenerationRequest) -> Result<GenerationResponse, AttemptError> {
        let body = Body {
            model: &request.model_id,
            prompt: &request.prompt,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            stop: request.stop.as_deref(),
        };
        let mut builder = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let started = Instant::now();
        let response = builder.send().map_err(|e| AttemptError::Retryable {
            status: None,
            message: e.to_string(),
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| AttemptError::Retryable {
            status: Some(status.as_u16()),
            message: format!("reading body: {e}"),
        })?;

        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(AttemptError::Fatal(GatewayError::Credential {
                status: Some(status.as_u16()),
                message: excerpt(&text),
            }));
        }
        if is_retryable_status(status) {
            return Err(AttemptError::Retryable {
                status: Some(status.as_u16()),
                message: excerpt(&text),
            });
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(GatewayError::Status {
                status: status.as_u16(),
                excerpt: excerpt(&text),
            }));
        }
        let mut parsed = parse_completion(&text)?;
        parsed.latency = started.elapsed();
        Ok(parsed)
    }
}
