use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AnnotationRequest, ProviderResponse};
use crate::annotation::{validate_record, validate_record_shape, AnnotationRecord, RecordSchema, RuleId, ValidationOptions};
use crate::diagnostics::Severity;
use crate::landmark::MapPairIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// The payload is not a JSON array of objects.
    ParseError,
    /// An item violates the output schema or the cascade rules.
    SchemaError,
    /// An accepted record drew a warning.
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseDiagnostic {
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re_id: Option<String>,
    pub kind: DiagnosticKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<RuleId>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedResponse {
    /// Records that passed the schema and every validation rule.
    pub records: Vec<AnnotationRecord>,
    pub diagnostics: Vec<ResponseDiagnostic>,
}

impl ParsedResponse {
    pub fn has(&self, kind: DiagnosticKind) -> bool {
        self.diagnostics.iter().any(|d| d.kind == kind)
    }
}

/// Removes a Markdown code fence around the payload, if any.
fn unfence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let body = rest.split_once('\n').map(|(_, b)| b).unwrap_or("");
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Parses a payload into validated records. Accepts a bare array or an
/// object whose only member is an array (as structured-output APIs return).
pub fn parse_response(
    response: &ProviderResponse,
    schema: &RecordSchema,
    index: Option<&MapPairIndex>,
    options: &ValidationOptions,
) -> ParsedResponse {
    let mut out = ParsedResponse::default();
    let diag = |re_id: Option<String>, kind, rule_id, message: String| ResponseDiagnostic {
        request_id: response.request_id.clone(),
        re_id,
        kind,
        rule_id,
        message,
    };
    let value: Value = match serde_json::from_str(unfence(&response.raw_text)) {
        Ok(v) => v,
        Err(e) => {
            out.diagnostics
                .push(diag(None, DiagnosticKind::ParseError, None, format!("payload is not JSON: {e}")));
            return out;
        }
    };
    let items = match value {
        Value::Array(items) => items,
        Value::Object(map) if map.len() == 1 && map.values().all(Value::is_array) => {
            match map.into_iter().next() {
                Some((_, Value::Array(items))) => items,
                _ => unreachable!("checked above"),
            }
        }
        other => {
            let kind = match other {
                Value::Object(_) => "object",
                Value::String(_) => "string",
                Value::Number(_) => "number",
                Value::Bool(_) => "boolean",
                _ => "null",
            };
            out.diagnostics.push(diag(
                None,
                DiagnosticKind::ParseError,
                None,
                format!("payload is a {kind}, expected an array of records"),
            ));
            return out;
        }
    };

    for (i, item) in items.into_iter().enumerate() {
        let re_id = item.get("re_id").and_then(Value::as_str).map(String::from);
        let errors = schema.item_errors(&item);
        if !errors.is_empty() {
            for e in errors {
                out.diagnostics
                    .push(diag(re_id.clone(), DiagnosticKind::SchemaError, None, format!("item {i}: {e}")));
            }
            continue;
        }
        let record: AnnotationRecord = match serde_json::from_value(item) {
            Ok(r) => r,
            Err(e) => {
                out.diagnostics
                    .push(diag(re_id, DiagnosticKind::SchemaError, None, format!("item {i}: {e}")));
                continue;
            }
        };
        let findings = match index {
            Some(index) => validate_record(&record, index, options),
            None => validate_record_shape(&record, options),
        };
        let mut rejected = false;
        for f in findings {
            let kind = match f.severity {
                Severity::Error => {
                    rejected = true;
                    DiagnosticKind::SchemaError
                }
                Severity::Warning => DiagnosticKind::Warning,
            };
            out.diagnostics
                .push(diag(Some(record.re_id.clone()), kind, Some(f.rule_id), f.message));
        }
        if !rejected {
            out.records.push(record);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingReDiagnostic {
    pub run_id: String,
    pub re_id: String,
    pub dialogue_id: String,
    pub request_id: String,
    pub reason_hint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantinedRecord {
    pub request_id: String,
    pub reason: String,
    pub record: AnnotationRecord,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reconciliation {
    /// At most one record per requested RE, in target order.
    pub accepted: Vec<AnnotationRecord>,
    pub missing: Vec<MissingReDiagnostic>,
    /// Records for unrequested REs and repeated records for one RE.
    pub quarantined: Vec<QuarantinedRecord>,
}

/// Matches returned records to the requested REs. `diagnostics` only feed
/// the hint attached to a missing RE.
pub fn reconcile(
    run_id: &str,
    request: &AnnotationRequest,
    records: &[AnnotationRecord],
    diagnostics: &[ResponseDiagnostic],
) -> Reconciliation {
    let targets: BTreeSet<&str> = request.target_re_ids.iter().map(String::as_str).collect();
    let mut first: BTreeMap<&str, &AnnotationRecord> = BTreeMap::new();
    let mut out = Reconciliation::default();
    for record in records {
        let id = record.re_id.as_str();
        let reason = if !targets.contains(id) {
            "unrequested re_id"
        } else if first.contains_key(id) {
            "duplicate record for re_id"
        } else {
            first.insert(id, record);
            continue;
        };
        out.quarantined.push(QuarantinedRecord {
            request_id: request.request_id.clone(),
            reason: reason.into(),
            record: record.clone(),
        });
    }
    let transport = diagnostics.iter().find(|d| d.re_id.is_none() && d.kind == DiagnosticKind::ParseError);
    for id in &request.target_re_ids {
        if let Some(r) = first.get(id.as_str()) {
            out.accepted.push((*r).clone());
            continue;
        }
        let rejected = diagnostics
            .iter()
            .find(|d| d.re_id.as_deref() == Some(id.as_str()) && d.kind == DiagnosticKind::SchemaError);
        let reason_hint = match (rejected, transport) {
            (Some(d), _) => format!("record rejected: {}", d.message),
            (None, Some(d)) => format!("response unusable: {}", d.message),
            (None, None) => "no record returned".into(),
        };
        out.missing.push(MissingReDiagnostic {
            run_id: run_id.into(),
            re_id: id.clone(),
            dialogue_id: request.dialogue_id.clone(),
            request_id: request.request_id.clone(),
            reason_hint,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::test_support::record;
    use crate::annotation::AttributeCascade;
    use crate::annotator::tests_support::request_for;

    fn response(raw: &str) -> ProviderResponse {
        ProviderResponse {
            request_id: "d1_0001".into(),
            raw_text: raw.into(),
            latency_s: 0.0,
            provider_name: "test".into(),
            model_name: "test".into(),
        }
    }

    fn two() -> Vec<AnnotationRecord> {
        vec![
            record("re2", AttributeCascade::REACHABLE[4], "m0_barn#0@g", "m0_barn#0@f"),
            record("re3", AttributeCascade::REACHABLE[1], "m0_barn#0@f", ""),
        ]
    }

    fn parse(raw: &str) -> ParsedResponse {
        parse_response(&response(raw), &RecordSchema::default(), None, &Default::default())
    }

    #[test]
    fn valid_payload() {
        let raw = serde_json::to_string(&two()).unwrap();
        let p = parse(&raw);
        assert_eq!(p.records, two());
        assert!(p.diagnostics.is_empty());
        let wrapped = format!("```json\n{{\"records\": {raw}}}\n```");
        assert_eq!(parse(&wrapped).records, two());
    }

    #[test]
    fn side_x_is_a_schema_error() {
        let raw = serde_json::to_string(&two()).unwrap().replace("m0_barn#0@f\",\"is_q", "m0_barn#0@x\",\"is_q");
        let p = parse(&raw);
        assert_eq!(p.records.len(), 1);
        assert!(p.has(DiagnosticKind::SchemaError));
        assert!(!p.has(DiagnosticKind::ParseError));
    }

    #[test]
    fn non_json_is_a_parse_error() {
        let p = parse("I think the answer is the barn.");
        assert!(p.records.is_empty());
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].kind, DiagnosticKind::ParseError);
        assert!(parse("{\"a\": 1}").has(DiagnosticKind::ParseError));
    }

    #[test]
    fn cascade_violation_rejects_record() {
        let mut bad = two();
        bad[1].addressee_landmark = Some(crate::annotation::test_support::set("m0_barn#0@g"));
        bad[1].cascade.is_grounded = None;
        let p = parse(&serde_json::to_string(&bad).unwrap());
        assert_eq!(p.records.len(), 1);
        assert!(p.has(DiagnosticKind::SchemaError));
    }

    #[test]
    fn duplicate_ids_in_set_are_rejected() {
        let raw = serde_json::to_string(&two())
            .unwrap()
            .replace("\"m0_barn#0@g\"", "\"m0_barn#0@g+m0_barn#0@g\"");
        let p = parse(&raw);
        assert_eq!(p.records.len(), 1, "{:?}", p.diagnostics);
        assert_eq!(p.records[0].re_id, "re3");
        assert_eq!(p.diagnostics[0].re_id.as_deref(), Some("re2"));
        assert_eq!(p.diagnostics[0].kind, DiagnosticKind::SchemaError);
    }

    #[test]
    fn reconcile_covers_all_cases() {
        let req = request_for("d1", 1, &["re2", "re3"]);
        let r = reconcile("run", &req, &two(), &[]);
        assert_eq!(r.accepted.len(), 2);
        assert!(r.missing.is_empty() && r.quarantined.is_empty());

        let r = reconcile("run", &req, &two()[..1], &[]);
        assert_eq!(r.missing.len(), 1);
        assert_eq!(r.missing[0].re_id, "re3");
        assert_eq!(r.missing[0].reason_hint, "no record returned");

        let mut extra = two();
        extra.push(record("re9", AttributeCascade::REACHABLE[1], "m0_barn#0@g", ""));
        extra.push(two()[0].clone());
        let r = reconcile("run", &req, &extra, &[]);
        assert_eq!(r.accepted.len(), 2);
        assert_eq!(r.quarantined.len(), 2);
        assert_eq!(extra.len() + r.missing.len() - r.quarantined.len(), req.target_re_ids.len());
    }

    #[test]
    fn dropout_of_one_in_ten() {
        let ids: Vec<String> = (0..10).map(|i| format!("re{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let req = request_for("d1", 0, &refs);
        let records: Vec<_> = ids[..9]
            .iter()
            .map(|id| record(id, AttributeCascade::REACHABLE[1], "m0_barn#0@g", ""))
            .collect();
        let r = reconcile("run", &req, &records, &[]);
        assert_eq!(r.missing.len(), 1);
        assert_eq!(r.missing[0].re_id, "re9");
    }
}
