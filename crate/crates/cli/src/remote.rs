//! Provider for OpenAI-compatible chat-completion endpoints.

use std::collections::BTreeMap;
use std::time::Duration;

use anyhow::{Context, Result};
use refground::annotation::{emit_item_schema, ValidationOptions};
use refground::annotator::{AnnotationRequest, Provider, ProviderResponse, RetryPolicy, SubmissionHandle, TransportError};
use serde::Deserialize;
use serde_json::{json, Value};

pub const API_KEY_VAR: &str = "PROVIDER_API_KEY";
pub const BASE_URL_VAR: &str = "PROVIDER_BASE_URL";

/// Provider settings read from TOML. Unknown keys are rejected so typos do
/// not silently fall back to defaults.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub model: String,
    pub parallelism: usize,
    pub timeout_s: u64,
    pub retry: RetryPolicy,
    /// Extra request-body fields, e.g. `temperature`; copied verbatim.
    pub parameters: toml::Table,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o".into(),
            parallelism: 4,
            timeout_s: 300,
            retry: RetryPolicy::default(),
            parameters: toml::Table::new(),
        }
    }
}

impl ProviderConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid provider config")
    }
}

pub struct RemoteProvider {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
    model: String,
    parameters: serde_json::Map<String, Value>,
    response_format: Value,
}

impl RemoteProvider {
    pub fn new(base_url: &str, api_key: &str, config: &ProviderConfig, options: &ValidationOptions) -> Result<Self> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let item: Value = serde_json::from_str(&emit_item_schema(options)).expect("emitted schema is JSON");
        let parameters = match serde_json::to_value(&config.parameters)? {
            Value::Object(m) => m,
            _ => unreachable!("tables serialize as objects"),
        };
        Ok(Self {
            agent,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key: api_key.to_string(),
            model: config.model.clone(),
            parameters,
            response_format: json!({
                "type": "json_schema",
                "json_schema": {
                    "name": "annotation_records",
                    "strict": false,
                    "schema": {
                        "type": "object",
                        "properties": {"records": {"type": "array", "items": item}},
                        "required": ["records"],
                        "additionalProperties": false
                    }
                }
            }),
        })
    }

    /// Reads the endpoint and key from the environment.
    pub fn from_env(config: &ProviderConfig, options: &ValidationOptions) -> Result<Self> {
        let base = std::env::var(BASE_URL_VAR).unwrap_or_else(|_| "https://api.openai.com/v1".into());
        let key = std::env::var(API_KEY_VAR).with_context(|| format!("{API_KEY_VAR} is not set"))?;
        Self::new(&base, &key, config, options)
    }

    fn body(&self, request: &AnnotationRequest) -> Value {
        let mut body = self.parameters.clone();
        body.insert("model".into(), json!(self.model));
        body.insert(
            "messages".into(),
            json!([{"role": "user", "content": request.prompt.rendered}]),
        );
        body.insert("response_format".into(), self.response_format.clone());
        Value::Object(body)
    }
}

fn is_retryable_status(status: u16) -> bool {
    status == 408 || status == 409 || status == 429 || status >= 500
}

impl Provider for RemoteProvider {
    fn name(&self) -> &str {
        "openai_compatible"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn parameters(&self) -> BTreeMap<String, String> {
        self.parameters.iter().map(|(k, v)| (k.clone(), v.to_string())).collect()
    }

    fn submit(&self, request: &AnnotationRequest) -> Result<SubmissionHandle, TransportError> {
        let started = std::time::Instant::now();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(self.body(request))
            .map_err(|e| TransportError::retryable(format!("request failed: {e}")))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::retryable(format!("reading response failed: {e}")))?;
        if status != 200 {
            let message = format!("HTTP {status}: {}", text.chars().take(300).collect::<String>());
            return Err(if is_retryable_status(status) {
                TransportError::retryable(message)
            } else {
                TransportError::permanent(message)
            });
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| TransportError::permanent(format!("response envelope is not JSON: {e}")))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| TransportError::permanent("response has no choices[0].message.content"))?;
        Ok(SubmissionHandle::Ready(ProviderResponse {
            request_id: request.request_id.clone(),
            raw_text: content.to_string(),
            latency_s: started.elapsed().as_secs_f64(),
            provider_name: self.name().to_string(),
            model_name: value.get("model").and_then(Value::as_str).unwrap_or(&self.model).to_string(),
        }))
    }
}
