//! The five-attribute cascade, annotation records and their validation.

mod schema;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmark::LandmarkRefSet;
use crate::SpeakerRole;

pub use schema::{emit_item_schema, emit_output_schema, emit_output_schema_with, RecordSchema};
pub use validate::{validate_record, validate_record_shape, RuleId, ValidationDiagnostic};

/// One gate of the cascade, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    IsQuantificational,
    IsSpecified,
    IsAccommodated,
    IsGrounded,
    IsImagined,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::IsQuantificational,
        Attribute::IsSpecified,
        Attribute::IsAccommodated,
        Attribute::IsGrounded,
        Attribute::IsImagined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::IsQuantificational => "is_quantificational",
            Attribute::IsSpecified => "is_specified",
            Attribute::IsAccommodated => "is_accommodated",
            Attribute::IsGrounded => "is_grounded",
            Attribute::IsImagined => "is_imagined",
        }
    }

    /// Value of the previous attribute that keeps this one applicable.
    /// `None` for the first attribute, which always applies.
    pub fn opening_value(self) -> Option<(Attribute, bool)> {
        match self {
            Attribute::IsQuantificational => None,
            Attribute::IsSpecified => Some((Attribute::IsQuantificational, false)),
            Attribute::IsAccommodated => Some((Attribute::IsSpecified, true)),
            Attribute::IsGrounded => Some((Attribute::IsAccommodated, true)),
            Attribute::IsImagined => Some((Attribute::IsGrounded, true)),
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown attribute `{s}`"))
    }
}

/// Gated attributes. An attribute whose gate is closed is absent, not false.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct AttributeCascade {
    pub is_quantificational: bool,
    #[serde(default)]
    pub is_specified: Option<bool>,
    #[serde(default)]
    pub is_accommodated: Option<bool>,
    #[serde(default)]
    pub is_grounded: Option<bool>,
    #[serde(default)]
    pub is_imagined: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CascadeError {
    #[error("{attribute} is present although its gate is closed")]
    PresentWhenClosed { attribute: Attribute },
    #[error("{attribute} is absent although its gate is open")]
    MissingWhenOpen { attribute: Attribute },
}

impl CascadeError {
    pub fn attribute(self) -> Attribute {
        match self {
            CascadeError::PresentWhenClosed { attribute } | CascadeError::MissingWhenOpen { attribute } => attribute,
        }
    }
}

impl AttributeCascade {
    /// Every reachable shape, in cascade order of where it stops.
    pub const REACHABLE: [AttributeCascade; 6] = [
        AttributeCascade::stop(true, None, None, None, None),
        AttributeCascade::stop(false, Some(false), None, None, None),
        AttributeCascade::stop(false, Some(true), Some(false), None, None),
        AttributeCascade::stop(false, Some(true), Some(true), Some(false), None),
        AttributeCascade::stop(false, Some(true), Some(true), Some(true), Some(false)),
        AttributeCascade::stop(false, Some(true), Some(true), Some(true), Some(true)),
    ];

    const fn stop(
        q: bool,
        s: Option<bool>,
        a: Option<bool>,
        g: Option<bool>,
        i: Option<bool>,
    ) -> Self {
        Self {
            is_quantificational: q,
            is_specified: s,
            is_accommodated: a,
            is_grounded: g,
            is_imagined: i,
        }
    }

    pub fn get(&self, attribute: Attribute) -> Option<bool> {
        match attribute {
            Attribute::IsQuantificational => Some(self.is_quantificational),
            Attribute::IsSpecified => self.is_specified,
            Attribute::IsAccommodated => self.is_accommodated,
            Attribute::IsGrounded => self.is_grounded,
            Attribute::IsImagined => self.is_imagined,
        }
    }

    /// Whether the gate in front of `attribute` is open.
    pub fn is_open(&self, attribute: Attribute) -> bool {
        match attribute.opening_value() {
            None => true,
            Some((prev, value)) => self.get(prev) == Some(value),
        }
    }

    /// One error per attribute whose presence disagrees with its gate.
    pub fn gating_errors(&self) -> Vec<CascadeError> {
        Attribute::ALL
            .into_iter()
            .skip(1)
            .filter_map(|attribute| match (self.is_open(attribute), self.get(attribute)) {
                (true, None) => Some(CascadeError::MissingWhenOpen { attribute }),
                (false, Some(_)) => Some(CascadeError::PresentWhenClosed { attribute }),
                _ => None,
            })
            .collect()
    }

    pub fn is_grounded(&self) -> bool {
        self.is_grounded == Some(true)
    }

    pub fn is_imagined(&self) -> bool {
        self.is_imagined == Some(true)
    }
}

/// The applicable prefix of the cascade, ending at the first closed gate.
pub fn applicable_attributes(cascade: &AttributeCascade) -> Result<Vec<Attribute>, CascadeError> {
    if let Some(err) = cascade.gating_errors().into_iter().next() {
        return Err(err);
    }
    Ok(Attribute::ALL
        .into_iter()
        .take_while(|a| cascade.is_open(*a))
        .collect())
}

/// One reference expression annotated from both participants' perspectives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub re_id: String,
    pub speaker: SpeakerRole,
    pub addressee: SpeakerRole,
    /// May be null only for quantificational expressions.
    pub speaker_landmark: Option<LandmarkRefSet>,
    #[serde(flatten)]
    pub cascade: AttributeCascade,
    #[serde(default)]
    pub addressee_landmark: Option<LandmarkRefSet>,
    pub reason: String,
}

impl AnnotationRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

/// Whether a quantificational expression must still name a speaker landmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantificationalSpeakerId {
    Required,
    #[default]
    Optional,
}

impl FromStr for QuantificationalSpeakerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "required" => Ok(Self::Required),
            "optional" => Ok(Self::Optional),
            _ => Err(format!("expected `required` or `optional`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationOptions {
    pub quantificational_speaker_id: QuantificationalSpeakerId,
    /// Reasons longer than this many words draw a warning.
    pub max_reason_words: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            quantificational_speaker_id: QuantificationalSpeakerId::Optional,
            max_reason_words: 50,
        }
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::landmark::parse_ref_set;

    pub fn set(text: &str) -> LandmarkRefSet {
        parse_ref_set(text).unwrap()
    }

    /// A record with the given cascade and landmarks consistent with it.
    pub fn record(re_id: &str, cascade: AttributeCascade, speaker: &str, addressee: &str) -> AnnotationRecord {
        let speaker_landmark = set(speaker);
        let addressee_landmark = match cascade.is_grounded {
            Some(true) if cascade.is_imagined() => Some(speaker_landmark.clone()),
            Some(true) => Some(set(addressee)),
            _ => None,
        };
        AnnotationRecord {
            re_id: re_id.into(),
            speaker: speaker_landmark.side(),
            addressee: speaker_landmark.side().opposite(),
            speaker_landmark: Some(speaker_landmark),
            cascade,
            addressee_landmark,
            reason: "matches the description".into(),
        }
    }

    /// Every combination of values, including absence below the first gate.
    pub fn all_shapes() -> Vec<AttributeCascade> {
        let tri = [None, Some(false), Some(true)];
        let mut out = Vec::new();
        for q in [false, true] {
            for s in tri {
                for a in tri {
                    for g in tri {
                        for i in tri {
                            out.push(AttributeCascade {
                                is_quantificational: q,
                                is_specified: s,
                                is_accommodated: a,
                                is_grounded: g,
                                is_imagined: i,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}
