//! Provider abstraction, batch submission with retries, response parsing,
//! reconciliation against requested REs, and the deterministic mock.

mod mock;
mod parse;
mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::PromptDocument;

pub use mock::{mock_annotate, MockPolicy, MockProvider};
pub use parse::{
    parse_response, reconcile, DiagnosticKind, MissingReDiagnostic, ParsedResponse, QuarantinedRecord,
    Reconciliation, ResponseDiagnostic,
};
pub use run::{run_requests, RunOutput};

/// One prompt sent to a provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRequest {
    /// `<dialogue>_<transaction:04>`, unique per run.
    pub request_id: String,
    pub dialogue_id: String,
    pub transaction_index: u32,
    pub prompt: PromptDocument,
    pub target_re_ids: Vec<String>,
}

pub fn request_id(dialogue_id: &str, transaction_index: u32) -> String {
    format!("{dialogue_id}_{transaction_index:04}")
}

impl AnnotationRequest {
    pub fn from_prompt(prompt: PromptDocument) -> Self {
        Self {
            request_id: request_id(&prompt.dialogue_id, prompt.transaction_index),
            dialogue_id: prompt.dialogue_id.clone(),
            transaction_index: prompt.transaction_index,
            target_re_ids: prompt.target_re_ids.clone(),
            prompt,
        }
    }

    /// The same request restricted to `re_ids`, keeping the original prompt.
    pub fn narrowed(&self, re_ids: &[String]) -> Self {
        Self {
            target_re_ids: self
                .target_re_ids
                .iter()
                .filter(|id| re_ids.contains(id))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub request_id: String,
    pub raw_text: String,
    pub latency_s: f64,
    pub provider_name: String,
    pub model_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    /// Permanent failures skip the remaining attempts.
    pub retryable: bool,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

/// What `submit` hands back: either the answer, or a token to wait on.
#[derive(Debug, Clone, PartialEq)]
pub enum SubmissionHandle {
    Ready(ProviderResponse),
    Pending { request_id: String, token: String },
}

/// Two-step contract shared by synchronous and batch-file providers.
pub trait Provider: Sync {
    fn name(&self) -> &str;
    fn model(&self) -> &str;
    /// Settings in force, recorded verbatim in the run manifest.
    fn parameters(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
    fn submit(&self, request: &AnnotationRequest) -> Result<SubmissionHandle, TransportError>;
    fn await_response(&self, handle: SubmissionHandle) -> Result<ProviderResponse, TransportError> {
        match handle {
            SubmissionHandle::Ready(response) => Ok(response),
            SubmissionHandle::Pending { request_id, .. } => Err(TransportError::permanent(format!(
                "provider {} cannot wait on pending request {request_id}",
                self.name()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before retry k (1-based) is `base_delay * 2^k`, scaled by jitter.
    pub base_delay_s: f64,
    /// Relative jitter, e.g. 0.2 for ±20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_s: 1.0,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let nominal = self.base_delay_s * 2f64.powi(retry as i32);
        let scale = if self.jitter > 0.0 {
            1.0 + rng.random_range(-self.jitter..=self.jitter)
        } else {
            1.0
        };
        Duration::from_secs_f64((nominal * scale).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub request_id: String,
    pub attempts: u32,
    pub result: Result<ProviderResponse, TransportError>,
}

fn run_one(provider: &dyn Provider, request: &AnnotationRequest, policy: &RetryPolicy) -> BatchOutcome {
    let mut rng = rand::rng();
    let attempts = policy.max_attempts.max(1);
    let mut last = TransportError::permanent("no attempt made");
    for attempt in 1..=attempts {
        let started = Instant::now();
        let result = provider.submit(request).and_then(|h| provider.await_response(h));
        match result {
            Ok(mut response) => {
                if response.latency_s == 0.0 {
                    response.latency_s = started.elapsed().as_secs_f64();
                }
                return BatchOutcome {
                    request_id: request.request_id.clone(),
                    attempts: attempt,
                    result: Ok(response),
                };
            }
            Err(err) => {
                let retryable = err.retryable;
                last = err;
                if !retryable {
                    return BatchOutcome {
                        request_id: request.request_id.clone(),
                        attempts: attempt,
                        result: Err(last),
                    };
                }
                if attempt < attempts {
                    thread::sleep(policy.delay(attempt, &mut rng));
                }
            }
        }
    }
    BatchOutcome {
        request_id: request.request_id.clone(),
        attempts,
        result: Err(last),
    }
}

/// Sends every request, at most `parallelism` at a time. One outcome per
/// request, ordered by request id.
pub fn submit_batch(
    provider: &dyn Provider,
    requests: &[AnnotationRequest],
    policy: &RetryPolicy,
    parallelism: usize,
) -> Vec<BatchOutcome> {
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(requests.len()));
    let workers = parallelism.clamp(1, requests.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(request) = requests.get(i) else { break };
                let outcome = run_one(provider, request, policy);
                done.lock().expect("no worker panics while holding the lock").push(outcome);
            });
        }
    });
    let mut out = done.into_inner().expect("workers joined");
    out.sort_by(|a, b| a.request_id.cmp(&b.request_id));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    Ok,
    ParseError,
    SchemaError,
    MissingRes,
    TransportError,
}

impl RequestStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestStatus::Ok => "ok",
            RequestStatus::ParseError => "parse_error",
            RequestStatus::SchemaError => "schema_error",
            RequestStatus::MissingRes => "missing_res",
            RequestStatus::TransportError => "transport_error",
        }
    }

    /// Worst condition wins: transport, then parse, schema, missing.
    pub fn classify(transport_failed: bool, parse_error: bool, schema_error: bool, missing: bool) -> Self {
        if transport_failed {
            RequestStatus::TransportError
        } else if parse_error {
            RequestStatus::ParseError
        } else if schema_error {
            RequestStatus::SchemaError
        } else if missing {
            RequestStatus::MissingRes
        } else {
            RequestStatus::Ok
        }
    }
}

impl fmt::Display for RequestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: String,
    pub dialogue_id: String,
    pub transaction_index: u32,
    pub status: RequestStatus,
    pub attempts: u32,
    pub records: usize,
    pub missing: usize,
    pub quarantined: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Provenance of one annotation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub provider: String,
    pub model: String,
    pub parameters: BTreeMap<String, String>,
    pub config_digest: String,
    pub started_at: String,
    pub finished_at: String,
    /// Set by `repair` runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repairs: Option<String>,
    pub requests: Vec<RequestRecord>,
}

impl RunManifest {
    pub fn status_counts(&self) -> BTreeMap<RequestStatus, usize> {
        let mut out = BTreeMap::new();
        for r in &self.requests {
            *out.entry(r.status).or_insert(0) += 1;
        }
        out
    }
}

/// Hex SHA-256 over the given parts, each terminated by a NUL byte.
pub fn config_digest<I, S>(parts: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_ref());
        hasher.update([0u8]);
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::prompt::PromptSection;

    /// A request with an empty prompt.
    pub fn request_for(dialogue_id: &str, transaction_index: u32, targets: &[&str]) -> AnnotationRequest {
        let mut text = String::new();
        for s in PromptSection::ALL {
            let body = if s == PromptSection::TargetRefIds { targets.join("\n") } else { String::new() };
            text.push_str(&format!("<{0}>\n{1}\n</{0}>\n", s.tag(), body));
        }
        AnnotationRequest::from_prompt(PromptDocument::parse(dialogue_id, transaction_index, &text).unwrap())
    }
}
