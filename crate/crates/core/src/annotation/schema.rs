use serde_json::{json, Value};

use super::{QuantificationalSpeakerId, ValidationOptions};

const DRAFT: &str = "https://json-schema.org/draft/2020-12/schema";
const UMLM: &str = "[a-z0-9]+_[a-z0-9_]+#(0|[1-9][0-9]*)@";

fn ref_set_pattern(side: Option<char>) -> String {
    match side {
        Some(s) => format!("^{UMLM}{s}(\\+{UMLM}{s})*$"),
        None => format!("^({UMLM}g(\\+{UMLM}g)*|{UMLM}f(\\+{UMLM}f)*)$"),
    }
}

/// `then` when `field` equals `value`, `otherwise` when it does not.
fn when(field: &str, value: Value, then: Value, otherwise: Value) -> Value {
    json!({
        "if": { "properties": { field: { "const": value } } },
        "then": then,
        "else": otherwise,
    })
}

fn field_is(field: &str, schema: Value) -> Value {
    json!({ "properties": { field: schema } })
}

fn defs(options: &ValidationOptions) -> Value {
    let nullable_bool = json!({ "type": ["boolean", "null"] });
    let nullable_set = json!({ "anyOf": [{ "$ref": "#/$defs/ref_set" }, { "type": "null" }] });
    let speaker_landmark = match options.quantificational_speaker_id {
        QuantificationalSpeakerId::Required => json!({ "$ref": "#/$defs/ref_set" }),
        QuantificationalSpeakerId::Optional => nullable_set.clone(),
    };
    let gate = |prev: &str, open: bool, next: &str| {
        when(
            prev,
            json!(open),
            field_is(next, json!({ "type": "boolean" })),
            field_is(next, json!({ "type": "null" })),
        )
    };
    let side_set = |field: &str, side: &str| field_is(field, json!({ "$ref": format!("#/$defs/ref_set_{side}") }));
    let any = json!(true);

    json!({
        "role": { "enum": ["giver", "follower"] },
        "umlm": { "type": "string", "pattern": format!("^{UMLM}[gf]$") },
        "ref_set": { "type": "string", "pattern": ref_set_pattern(None) },
        "ref_set_g": { "type": "string", "pattern": ref_set_pattern(Some('g')) },
        "ref_set_f": { "type": "string", "pattern": ref_set_pattern(Some('f')) },
        "record": {
            "type": "object",
            "additionalProperties": false,
            "required": [
                "re_id", "speaker", "addressee", "speaker_landmark",
                "is_quantificational", "is_specified", "is_accommodated", "is_grounded", "is_imagined",
                "addressee_landmark", "reason"
            ],
            "properties": {
                "re_id": { "type": "string", "minLength": 1 },
                "speaker": { "$ref": "#/$defs/role" },
                "addressee": { "$ref": "#/$defs/role" },
                "speaker_landmark": speaker_landmark,
                "is_quantificational": { "type": "boolean" },
                "is_specified": nullable_bool,
                "is_accommodated": nullable_bool,
                "is_grounded": nullable_bool,
                "is_imagined": nullable_bool,
                "addressee_landmark": nullable_set,
                "reason": { "type": "string" }
            },
            "allOf": [
                when("speaker", json!("giver"), field_is("addressee", json!({ "const": "follower" })), field_is("addressee", json!({ "const": "giver" }))),
                when("is_quantificational", json!(false), field_is("speaker_landmark", json!({ "type": "string" })), any.clone()),
                gate("is_quantificational", false, "is_specified"),
                gate("is_specified", true, "is_accommodated"),
                gate("is_accommodated", true, "is_grounded"),
                gate("is_grounded", true, "is_imagined"),
                when(
                    "is_grounded",
                    json!(true),
                    field_is("addressee_landmark", json!({ "type": "string" })),
                    field_is("addressee_landmark", json!({ "type": "null" }))
                ),
                when(
                    "speaker",
                    json!("giver"),
                    field_is("speaker_landmark", json!({ "anyOf": [{ "type": "null" }, { "$ref": "#/$defs/ref_set_g" }] })),
                    field_is("speaker_landmark", json!({ "anyOf": [{ "type": "null" }, { "$ref": "#/$defs/ref_set_f" }] }))
                ),
                {
                    "if": { "properties": { "is_imagined": { "const": true }, "speaker": { "const": "giver" } } },
                    "then": side_set("addressee_landmark", "g")
                },
                {
                    "if": { "properties": { "is_imagined": { "const": true }, "speaker": { "const": "follower" } } },
                    "then": side_set("addressee_landmark", "f")
                },
                {
                    "if": { "properties": { "is_imagined": { "const": false }, "addressee": { "const": "giver" } } },
                    "then": side_set("addressee_landmark", "g")
                },
                {
                    "if": { "properties": { "is_imagined": { "const": false }, "addressee": { "const": "follower" } } },
                    "then": side_set("addressee_landmark", "f")
                }
            ]
        }
    })
}

fn document(options: &ValidationOptions, top: Value) -> Value {
    let mut doc = json!({
        "$schema": DRAFT,
        "$id": "urn:refground:annotation-records",
        "title": "Reference expression annotation records",
        "$defs": defs(options),
    });
    let obj = doc.as_object_mut().expect("object literal");
    for (k, v) in top.as_object().expect("object literal") {
        obj.insert(k.clone(), v.clone());
    }
    doc
}

fn render(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("schema serializes");
    s.push('\n');
    s
}

/// Schema for an array of annotation records under the default options.
pub fn emit_output_schema() -> String {
    emit_output_schema_with(&ValidationOptions::default())
}

/// Schema for an array of annotation records. Keys are emitted in sorted
/// order, so the text is byte-stable.
pub fn emit_output_schema_with(options: &ValidationOptions) -> String {
    render(&document(options, json!({ "type": "array", "items": { "$ref": "#/$defs/record" } })))
}

/// Schema for a single record.
pub fn emit_item_schema(options: &ValidationOptions) -> String {
    render(&document(options, json!({ "$ref": "#/$defs/record" })))
}

/// Compiled validators for the array and item schemas.
pub struct RecordSchema {
    array: jsonschema::Validator,
    item: jsonschema::Validator,
}

impl RecordSchema {
    pub fn new(options: &ValidationOptions) -> Self {
        let array = document(options, json!({ "type": "array", "items": { "$ref": "#/$defs/record" } }));
        let item = document(options, json!({ "$ref": "#/$defs/record" }));
        Self {
            array: jsonschema::draft202012::new(&array).expect("emitted schema compiles"),
            item: jsonschema::draft202012::new(&item).expect("emitted schema compiles"),
        }
    }

    pub fn is_valid_array(&self, value: &Value) -> bool {
        self.array.is_valid(value)
    }

    pub fn is_valid_item(&self, value: &Value) -> bool {
        self.item.is_valid(value)
    }

    /// Human-readable violations of one record, empty when valid.
    pub fn item_errors(&self, value: &Value) -> Vec<String> {
        self.item
            .iter_errors(value)
            .map(|e| {
                let path = e.instance_path().to_string();
                if path.is_empty() {
                    e.to_string()
                } else {
                    format!("{path}: {e}")
                }
            })
            .collect()
    }
}

impl Default for RecordSchema {
    fn default() -> Self {
        Self::new(&ValidationOptions::default())
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::{validate_record_shape, AnnotationRecord, AttributeCascade, RuleId};
    use super::*;

    fn to_value(r: &AnnotationRecord) -> Value {
        serde_json::to_value(r).unwrap()
    }

    #[test]
    fn schema_is_byte_stable_and_compiles() {
        let a = emit_output_schema();
        assert_eq!(a, emit_output_schema());
        let doc: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(doc["$schema"], DRAFT);
        assert!(jsonschema::draft202012::new(&doc).is_ok());
    }

    #[test]
    fn reachable_records_pass() {
        let schema = RecordSchema::default();
        let records: Vec<Value> = AttributeCascade::REACHABLE
            .iter()
            .enumerate()
            .map(|(i, c)| to_value(&record(&format!("re{i}"), *c, "m0_barn#0@g+m0_van#1@g", "m0_barn#0@f")))
            .collect();
        for r in &records {
            assert!(schema.is_valid_item(r), "{r}: {:?}", schema.item_errors(r));
        }
        assert!(schema.is_valid_array(&Value::Array(records)));
    }

    #[test]
    fn rejects_missing_speaker_landmark() {
        let schema = RecordSchema::default();
        let mut v = to_value(&record("re1", AttributeCascade::REACHABLE[4], "m0_barn#0@g", "m0_barn#0@f"));
        v.as_object_mut().unwrap().remove("speaker_landmark");
        assert!(!schema.is_valid_item(&v));
    }

    #[test]
    fn rejects_bad_side_token() {
        let schema = RecordSchema::default();
        let mut v = to_value(&record("re1", AttributeCascade::REACHABLE[4], "m0_barn#0@g", "m0_barn#0@f"));
        v["addressee_landmark"] = json!("m0_barn#0@x");
        assert!(!schema.is_valid_item(&v));
        assert!(!schema.item_errors(&v).is_empty());
    }

    #[test]
    fn rejects_gating_violations() {
        let schema = RecordSchema::default();
        for shape in all_shapes() {
            let v = to_value(&record("re", shape, "m0_barn#0@g", "m0_barn#0@f"));
            let reachable = AttributeCascade::REACHABLE.contains(&shape);
            assert_eq!(schema.is_valid_item(&v), reachable, "{shape:?}");
        }
    }

    #[test]
    fn required_policy_rejects_null_speaker() {
        let opts = ValidationOptions {
            quantificational_speaker_id: QuantificationalSpeakerId::Required,
            ..Default::default()
        };
        let mut r = record("re1", AttributeCascade::REACHABLE[0], "m0_barn#0@g", "");
        r.speaker_landmark = None;
        assert!(RecordSchema::default().is_valid_item(&to_value(&r)));
        assert!(!RecordSchema::new(&opts).is_valid_item(&to_value(&r)));
    }

    #[test]
    fn side_rules_in_schema() {
        let schema = RecordSchema::default();
        let r = record("re1", AttributeCascade::REACHABLE[4], "m0_barn#0@g", "m0_barn#0@g");
        assert!(!schema.is_valid_item(&to_value(&r)));
        assert_eq!(rules_of(&r), vec![RuleId::AddresseeSide]);
        let mut mixed = to_value(&r);
        mixed["speaker_landmark"] = json!("m0_barn#0@g+m0_van#0@f");
        assert!(!schema.is_valid_item(&mixed));
    }

    fn rules_of(r: &AnnotationRecord) -> Vec<RuleId> {
        validate_record_shape(r, &Default::default()).into_iter().map(|d| d.rule_id).collect()
    }
}
