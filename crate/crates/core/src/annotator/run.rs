use std::collections::BTreeMap;

use super::{
    parse_response, reconcile, submit_batch, AnnotationRequest, DiagnosticKind, MissingReDiagnostic, Provider,
    QuarantinedRecord, RequestRecord, RequestStatus, ResponseDiagnostic, RetryPolicy,
};
use crate::annotation::{AnnotationRecord, RecordSchema, ValidationOptions};
use crate::corpus::Corpus;
use crate::landmark::MapPairIndex;

/// Everything one pass over a request list produced. All lists follow
/// request_id order, and records follow target order within a request.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub records: Vec<AnnotationRecord>,
    pub missing: Vec<MissingReDiagnostic>,
    pub quarantined: Vec<QuarantinedRecord>,
    pub diagnostics: Vec<ResponseDiagnostic>,
    /// One entry per request.
    pub requests: Vec<RequestRecord>,
}

/// Submits, parses, validates and reconciles. Never aborts on a failing
/// request; its status and missing REs record the failure instead.
#[allow(clippy::too_many_arguments)]
pub fn run_requests(
    run_id: &str,
    provider: &dyn Provider,
    requests: &[AnnotationRequest],
    corpus: &Corpus,
    indices: &BTreeMap<String, MapPairIndex>,
    policy: &RetryPolicy,
    parallelism: usize,
    options: &ValidationOptions,
) -> RunOutput {
    let schema = RecordSchema::new(options);
    let by_id: BTreeMap<&str, &AnnotationRequest> = requests.iter().map(|r| (r.request_id.as_str(), r)).collect();
    let mut out = RunOutput::default();
    for outcome in submit_batch(provider, requests, policy, parallelism) {
        let request = by_id[outcome.request_id.as_str()];
        let index = corpus
            .dialogue(&request.dialogue_id)
            .and_then(|d| indices.get(&d.map_pair_id));
        let (records, diagnostics, transport_error) = match &outcome.result {
            Ok(response) => {
                let parsed = parse_response(response, &schema, index, options);
                (parsed.records, parsed.diagnostics, None)
            }
            Err(e) => (Vec::new(), Vec::new(), Some(e.message.clone())),
        };
        let mut rec = reconcile(run_id, request, &records, &diagnostics);
        if let Some(msg) = &transport_error {
            for m in &mut rec.missing {
                m.reason_hint = format!("transport failed: {msg}");
            }
        }
        let has = |k| diagnostics.iter().any(|d: &ResponseDiagnostic| d.kind == k);
        let status = RequestStatus::classify(
            transport_error.is_some(),
            has(DiagnosticKind::ParseError),
            has(DiagnosticKind::SchemaError),
            !rec.missing.is_empty(),
        );
        let error = transport_error.or_else(|| {
            diagnostics
                .iter()
                .find(|d| d.kind != DiagnosticKind::Warning)
                .map(|d| d.message.clone())
        });
        out.requests.push(RequestRecord {
            request_id: request.request_id.clone(),
            dialogue_id: request.dialogue_id.clone(),
            transaction_index: request.transaction_index,
            status,
            attempts: outcome.attempts,
            records: rec.accepted.len(),
            missing: rec.missing.len(),
            quarantined: rec.quarantined.len(),
            error,
        });
        out.records.extend(rec.accepted);
        out.missing.extend(rec.missing);
        out.quarantined.extend(rec.quarantined);
        out.diagnostics.extend(diagnostics);
    }
    out
}
