//! Property tests: grammar round-trips, state derivation against an
//! independent oracle, unification arithmetic, eval self-consistency and
//! the schema/validator subset relation.

use std::collections::HashMap;
use std::sync::OnceLock;

use proptest::prelude::*;
use refground::analysis::{derive_state, distribution, UnderstandingState, UnificationMode};
use refground::annotation::{
    validate_record_shape, AnnotationRecord, Attribute, AttributeCascade, RecordSchema, RuleId, ValidationOptions,
};
use refground::eval::{evaluate, PositiveClass};
use refground::landmark::{
    format_umlm, parse_ref_set, parse_umlm, LandmarkRefSet, LexicalVariantPair, LexicalVariantRegistry,
    UnifiedLandmarkId,
};
use refground::SpeakerRole;
use serde_json::{json, Value};

fn side() -> impl Strategy<Value = SpeakerRole> {
    prop_oneof![Just(SpeakerRole::Giver), Just(SpeakerRole::Follower)]
}

fn umlm() -> impl Strategy<Value = UnifiedLandmarkId> {
    ("[a-z0-9]{1,4}", "[a-z][a-z0-9_]{0,14}", 0u32..1000, side())
        .prop_map(|(m, n, o, s)| UnifiedLandmarkId::new(m, n, o, s))
}

fn ref_set() -> impl Strategy<Value = LandmarkRefSet> {
    (
        "[a-z0-9]{1,4}",
        side(),
        prop::collection::btree_set(("[a-z][a-z0-9_]{0,8}", 0u32..5), 1..5),
    )
        .prop_map(|(m, s, members)| {
            let ids = members
                .into_iter()
                .map(|(n, o)| UnifiedLandmarkId::new(m.clone(), n, o, s))
                .collect();
            LandmarkRefSet::new(ids).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn umlm_round_trip(id in umlm()) {
        let text = format_umlm(&id);
        let back = parse_umlm(&text).unwrap();
        prop_assert_eq!(&back, &id);
        prop_assert_eq!(format_umlm(&back), text);
    }

    #[test]
    fn ref_set_round_trip(set in ref_set()) {
        let text = set.to_string();
        let back = parse_ref_set(&text).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(back.to_string(), text);
    }
}

// ---- records over a small fixed landmark universe ----

const MAP: &str = "m1";
const NAMES: [&str; 4] = ["barn", "old_mill", "mill_wheel", "well"];

fn registry() -> LexicalVariantRegistry {
    LexicalVariantRegistry::new(vec![LexicalVariantPair {
        map_pair_id: MAP.into(),
        name_a: "old_mill".into(),
        name_b: "mill_wheel".into(),
        canonical_name: "old_mill".into(),
    }])
    .unwrap()
}

fn set_on(side: SpeakerRole, members: &[(usize, u32)]) -> LandmarkRefSet {
    let mut seen = Vec::new();
    for m in members {
        if !seen.contains(m) {
            seen.push(*m);
        }
    }
    LandmarkRefSet::new(
        seen.into_iter()
            .map(|(n, o)| UnifiedLandmarkId::new(MAP, NAMES[n], o, side))
            .collect(),
    )
    .unwrap()
}

fn members() -> impl Strategy<Value = Vec<(usize, u32)>> {
    prop::collection::vec((0usize..NAMES.len(), 0u32..2), 1..3)
}

/// A record valid under the default options.
fn valid_record(re_id: String) -> impl Strategy<Value = AnnotationRecord> {
    (0usize..6, side(), members(), members(), any::<bool>()).prop_map(move |(shape, speaker, spk, addr, no_spk)| {
        let cascade = AttributeCascade::REACHABLE[shape];
        let addressee = speaker.opposite();
        let speaker_set = set_on(speaker, &spk);
        let speaker_landmark = if cascade.is_quantificational && no_spk { None } else { Some(speaker_set.clone()) };
        let addressee_landmark = match (cascade.is_grounded, cascade.is_imagined) {
            (Some(true), Some(true)) => Some(speaker_set),
            (Some(true), _) => Some(set_on(addressee, &addr)),
            _ => None,
        };
        AnnotationRecord {
            re_id: re_id.clone(),
            speaker,
            addressee,
            speaker_landmark,
            cascade,
            addressee_landmark,
            reason: "because".into(),
        }
    })
}

fn record_set(max: usize) -> impl Strategy<Value = Vec<AnnotationRecord>> {
    (1..max).prop_flat_map(|n| (0..n).map(|i| valid_record(format!("re{i:04}"))).collect::<Vec<_>>())
}

/// Written without the library's key or cascade helpers: strip the side
/// suffix from each formatted id, rename registered variants, sort.
fn oracle(record: &AnnotationRecord, unified: bool) -> String {
    let c = &record.cascade;
    if c.is_quantificational {
        return "pending:quantificational".into();
    }
    for (value, label) in [
        (c.is_specified, "unspecified"),
        (c.is_accommodated, "not_accommodated"),
        (c.is_grounded, "not_grounded"),
    ] {
        if value == Some(false) {
            return format!("pending:{label}");
        }
    }
    if c.is_imagined == Some(true) {
        return "aligned".into();
    }
    let renames: HashMap<&str, &str> = HashMap::from([("m1_mill_wheel", "m1_old_mill")]);
    let norm = |s: &LandmarkRefSet| {
        let mut parts: Vec<String> = s
            .to_string()
            .split('+')
            .map(|p| {
                let (body, _side) = p.rsplit_once('@').unwrap();
                let (key, ord) = body.split_once('#').unwrap();
                let key = if unified { renames.get(key).copied().unwrap_or(key) } else { key };
                format!("{key}#{ord}")
            })
            .collect();
        parts.sort();
        parts.dedup();
        parts
    };
    let same = norm(record.speaker_landmark.as_ref().unwrap()) == norm(record.addressee_landmark.as_ref().unwrap());
    if same { "aligned" } else { "misunderstood" }.into()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn derive_state_matches_oracle(record in valid_record("re".into())) {
        let reg = registry();
        for (mode, unified) in [(UnificationMode::Raw, false), (UnificationMode::Unified, true)] {
            let state = derive_state(&record, &reg, mode).unwrap();
            prop_assert_eq!(state.to_string(), oracle(&record, unified));
        }
    }

    #[test]
    fn unification_arithmetic(records in record_set(40)) {
        let reg = registry();
        let raw = distribution(&records, &reg, UnificationMode::Raw).unwrap();
        let uni = distribution(&records, &reg, UnificationMode::Unified).unwrap();
        prop_assert_eq!(&raw.pending_by_reason, &uni.pending_by_reason);
        prop_assert_eq!(raw.pending, uni.pending);
        prop_assert_eq!(uni.aligned - raw.aligned, raw.misunderstood - uni.misunderstood);
        for d in [&raw, &uni] {
            prop_assert_eq!(d.aligned + d.pending + d.misunderstood, d.total);
        }
        for r in &records {
            let before = derive_state(r, &reg, UnificationMode::Raw).unwrap();
            let after = derive_state(r, &reg, UnificationMode::Unified).unwrap();
            prop_assert!(before == after
                || (before == UnderstandingState::Misunderstood && after == UnderstandingState::Aligned));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn eval_self_consistency(records in record_set(60)) {
        let report = evaluate(&records, &records, &registry(), PositiveClass::True).unwrap();
        for m in &report.attributes {
            prop_assert_eq!(m.accuracy, 1.0);
            prop_assert_eq!(m.f1, 1.0);
            prop_assert_eq!(m.error_count, 0);
        }
        prop_assert_eq!((report.re_level.res_with_error, report.re_level.total_attribute_errors), (0, 0));
        prop_assert_eq!(report.grounded_id.accuracy, 1.0);
        prop_assert_eq!(report.grounded_id.element_micro.f1, 1.0);
    }

    #[test]
    fn gold_gating_conservation(gold in record_set(60), machine_shapes in prop::collection::vec(0usize..6, 60)) {
        let report = evaluate(
            &with_shapes(&gold, &machine_shapes),
            &gold,
            &registry(),
            PositiveClass::True,
        ).unwrap();
        let n: Vec<usize> = report.attributes.iter().map(|m| m.n).collect();
        prop_assert!(n.windows(2).all(|w| w[0] >= w[1]), "{:?}", n);
        // Each gate's N is the previous N less the records it closes.
        for (i, a) in Attribute::ALL.iter().enumerate().skip(1) {
            let (prev, value) = a.opening_value().unwrap();
            let closed = gold.iter().filter(|r| r.cascade.get(prev) == Some(!value)).count();
            prop_assert_eq!(n[i], n[i - 1] - closed);
        }
        let total: usize = report.attributes.iter().map(|m| m.error_count).sum();
        prop_assert_eq!(total, report.re_level.total_attribute_errors);
        prop_assert!(report.re_level.res_with_error <= report.re_level.total_attribute_errors);
    }
}

fn with_shapes(records: &[AnnotationRecord], shapes: &[usize]) -> Vec<AnnotationRecord> {
    records
        .iter()
        .zip(shapes)
        .map(|(r, s)| {
            let mut m = r.clone();
            m.cascade = AttributeCascade::REACHABLE[*s];
            m
        })
        .collect()
}

// ---- schema acceptance implies validator acceptance ----

fn schema() -> &'static RecordSchema {
    static SCHEMA: OnceLock<RecordSchema> = OnceLock::new();
    SCHEMA.get_or_init(RecordSchema::default)
}

fn field(options: Vec<Value>) -> impl Strategy<Value = Value> {
    prop::sample::select(options)
}

fn tri() -> impl Strategy<Value = Value> {
    field(vec![Value::Null, json!(true), json!(false)])
}

fn landmark_value() -> impl Strategy<Value = Value> {
    field(vec![
        Value::Null,
        json!("m1_barn#0@g"),
        json!("m1_barn#0@f"),
        json!("m1_barn#1@f"),
        json!("m1_barn#0@g+m1_well#0@g"),
        json!("m2_barn#0@f"),
        json!("m1_barn#0@x"),
        json!("m1_barn#0@g+m1_barn#0@f"),
        json!(""),
    ])
}

fn raw_item() -> impl Strategy<Value = Value> {
    (
        field(vec![json!("giver"), json!("follower"), json!("narrator")]),
        field(vec![json!("giver"), json!("follower")]),
        landmark_value(),
        field(vec![json!(true), json!(false), Value::Null]),
        (tri(), tri(), tri(), tri()),
        landmark_value(),
    )
        .prop_map(|(speaker, addressee, spk, q, (s, a, g, i), addr)| {
            json!({
                "re_id": "re1",
                "speaker": speaker,
                "addressee": addressee,
                "speaker_landmark": spk,
                "is_quantificational": q,
                "is_specified": s,
                "is_accommodated": a,
                "is_grounded": g,
                "is_imagined": i,
                "addressee_landmark": addr,
                "reason": "because",
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5_000))]

    /// The schema cannot compare two strings for equality, so the imagined
    /// copy and the map-pair match are left to the validator.
    #[test]
    fn schema_accepts_only_validator_valid_shapes(item in raw_item()) {
        if schema().is_valid_item(&item) {
            let record: AnnotationRecord = serde_json::from_value(item.clone()).unwrap();
            let allowed = [RuleId::ImaginedCopy, RuleId::MapPairMismatch];
            for d in validate_record_shape(&record, &ValidationOptions::default()) {
                prop_assert!(
                    d.severity == refground::diagnostics::Severity::Warning || allowed.contains(&d.rule_id),
                    "{} accepted by schema but flagged {:?}", item, d.rule_id
                );
            }
        }
    }

    #[test]
    fn valid_records_pass_schema(record in valid_record("re1".into())) {
        let value = serde_json::to_value(&record).unwrap();
        prop_assert!(schema().is_valid_item(&value), "{}", value);
        prop_assert!(validate_record_shape(&record, &ValidationOptions::default()).is_empty());
    }
}
