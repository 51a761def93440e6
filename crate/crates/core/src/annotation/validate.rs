use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AnnotationRecord, Attribute, QuantificationalSpeakerId, ValidationOptions};
use crate::diagnostics::Severity;
use crate::landmark::{LandmarkRefSet, MapPairIndex};

/// The fixed rule catalogue. Every diagnostic names exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    /// `is_specified` present iff `is_quantificational` is false.
    CascadeSpecified,
    /// `is_accommodated` present iff `is_specified` is true.
    CascadeAccommodated,
    /// `is_grounded` present iff `is_accommodated` is true.
    CascadeGrounded,
    /// `is_imagined` present iff `is_grounded` is true.
    CascadeImagined,
    /// `addressee_landmark` present iff `is_grounded` is true.
    AddresseeLandmarkGating,
    /// An imagined interpretation repeats the speaker set verbatim.
    ImaginedCopy,
    /// A non-imagined addressee set lies on the addressee's side.
    AddresseeSide,
    /// The speaker set lies on the speaker's side.
    SpeakerSide,
    /// The addressee is the other participant.
    Roles,
    /// A speaker set is required, except for quantificational expressions
    /// when the policy allows it.
    SpeakerLandmarkRequired,
    /// Every id exists in the map pair index.
    UnknownLandmark,
    /// All ids belong to the record's map pair.
    MapPairMismatch,
    /// Warning: the reason is longer than the configured word limit.
    ReasonLength,
}

impl RuleId {
    pub const ALL: [RuleId; 13] = [
        RuleId::CascadeSpecified,
        RuleId::CascadeAccommodated,
        RuleId::CascadeGrounded,
        RuleId::CascadeImagined,
        RuleId::AddresseeLandmarkGating,
        RuleId::ImaginedCopy,
        RuleId::AddresseeSide,
        RuleId::SpeakerSide,
        RuleId::Roles,
        RuleId::SpeakerLandmarkRequired,
        RuleId::UnknownLandmark,
        RuleId::MapPairMismatch,
        RuleId::ReasonLength,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::CascadeSpecified => "cascade_specified",
            RuleId::CascadeAccommodated => "cascade_accommodated",
            RuleId::CascadeGrounded => "cascade_grounded",
            RuleId::CascadeImagined => "cascade_imagined",
            RuleId::AddresseeLandmarkGating => "addressee_landmark_gating",
            RuleId::ImaginedCopy => "imagined_copy",
            RuleId::AddresseeSide => "addressee_side",
            RuleId::SpeakerSide => "speaker_side",
            RuleId::Roles => "roles",
            RuleId::SpeakerLandmarkRequired => "speaker_landmark_required",
            RuleId::UnknownLandmark => "unknown_landmark",
            RuleId::MapPairMismatch => "map_pair_mismatch",
            RuleId::ReasonLength => "reason_length",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            RuleId::ReasonLength => Severity::Warning,
            _ => Severity::Error,
        }
    }

    pub fn for_gate(attribute: Attribute) -> Option<RuleId> {
        match attribute {
            Attribute::IsQuantificational => None,
            Attribute::IsSpecified => Some(RuleId::CascadeSpecified),
            Attribute::IsAccommodated => Some(RuleId::CascadeAccommodated),
            Attribute::IsGrounded => Some(RuleId::CascadeGrounded),
            Attribute::IsImagined => Some(RuleId::CascadeImagined),
        }
    }

    pub fn is_cascade(self) -> bool {
        matches!(
            self,
            RuleId::CascadeSpecified | RuleId::CascadeAccommodated | RuleId::CascadeGrounded | RuleId::CascadeImagined
        )
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationDiagnostic {
    pub re_id: String,
    pub rule_id: RuleId,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for ValidationDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}: {}", self.severity, self.rule_id, self.re_id, self.message)
    }
}

struct Sink<'a> {
    re_id: &'a str,
    out: Vec<ValidationDiagnostic>,
}

impl Sink<'_> {
    fn push(&mut self, rule_id: RuleId, message: impl Into<String>) {
        self.out.push(ValidationDiagnostic {
            re_id: self.re_id.to_string(),
            rule_id,
            severity: rule_id.severity(),
            message: message.into(),
        });
    }
}

/// Every rule that can be checked without the map pair index.
pub fn validate_record_shape(record: &AnnotationRecord, options: &ValidationOptions) -> Vec<ValidationDiagnostic> {
    let mut sink = Sink {
        re_id: &record.re_id,
        out: Vec::new(),
    };
    let cascade = &record.cascade;

    if record.addressee != record.speaker.opposite() {
        sink.push(
            RuleId::Roles,
            format!("addressee must be the {}, not the {}", record.speaker.opposite(), record.addressee),
        );
    }

    match &record.speaker_landmark {
        None => {
            let allowed =
                cascade.is_quantificational && options.quantificational_speaker_id == QuantificationalSpeakerId::Optional;
            if !allowed {
                sink.push(RuleId::SpeakerLandmarkRequired, "speaker_landmark is null");
            }
        }
        Some(set) if set.side() != record.speaker => {
            sink.push(
                RuleId::SpeakerSide,
                format!("speaker_landmark `{set}` is not on the {}'s map", record.speaker),
            );
        }
        Some(_) => {}
    }

    for err in cascade.gating_errors() {
        let rule = RuleId::for_gate(err.attribute()).expect("first attribute is never gated");
        sink.push(rule, err.to_string());
    }

    match (&record.addressee_landmark, cascade.is_grounded()) {
        (None, true) => sink.push(RuleId::AddresseeLandmarkGating, "is_grounded is true but addressee_landmark is null"),
        (Some(_), false) => sink.push(
            RuleId::AddresseeLandmarkGating,
            "addressee_landmark is set but is_grounded is not true",
        ),
        _ => {}
    }

    if let Some(addr) = &record.addressee_landmark {
        if cascade.is_imagined() {
            if record.speaker_landmark.as_ref() != Some(addr) {
                sink.push(
                    RuleId::ImaginedCopy,
                    format!(
                        "imagined interpretation `{addr}` differs from speaker_landmark `{}`",
                        display_opt(&record.speaker_landmark)
                    ),
                );
            }
        } else if addr.side() != record.addressee {
            sink.push(
                RuleId::AddresseeSide,
                format!("addressee_landmark `{addr}` is not on the {}'s map", record.addressee),
            );
        }
        if let Some(spk) = &record.speaker_landmark {
            if spk.map_pair_id() != addr.map_pair_id() {
                sink.push(
                    RuleId::MapPairMismatch,
                    format!("speaker and addressee sets name different map pairs ({} vs {})", spk.map_pair_id(), addr.map_pair_id()),
                );
            }
        }
    }

    let words = record.reason.split_whitespace().count();
    if words > options.max_reason_words {
        sink.push(
            RuleId::ReasonLength,
            format!("reason has {words} words; limit is {}", options.max_reason_words),
        );
    }
    sink.out
}

fn display_opt(set: &Option<LandmarkRefSet>) -> String {
    set.as_ref().map(|s| s.to_string()).unwrap_or_else(|| "null".into())
}

/// All rules, including that every id resolves in `index`.
pub fn validate_record(
    record: &AnnotationRecord,
    index: &MapPairIndex,
    options: &ValidationOptions,
) -> Vec<ValidationDiagnostic> {
    let mut out = validate_record_shape(record, options);
    let mut sink = Sink {
        re_id: &record.re_id,
        out: Vec::new(),
    };
    for (field, set) in [
        ("speaker_landmark", &record.speaker_landmark),
        ("addressee_landmark", &record.addressee_landmark),
    ] {
        let Some(set) = set else { continue };
        if set.map_pair_id() != index.map_pair_id() {
            sink.push(
                RuleId::MapPairMismatch,
                format!("{field} names map pair {} but the dialogue uses {}", set.map_pair_id(), index.map_pair_id()),
            );
            continue;
        }
        for id in set.ids() {
            if !index.contains(id) {
                sink.push(RuleId::UnknownLandmark, format!("{field} id `{id}` does not exist on this map pair"));
            }
        }
    }
    out.extend(sink.out);
    out
}
