//! Understanding states, their distributions, reference chains and
//! turns-to-ground.

mod chains;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::AnnotationRecord;
use crate::landmark::{LandmarkRefSet, LexicalVariantRegistry, MtlmKey};

pub use chains::{
    chain_stats, extract_chains, misunderstanding_by_type, ttg_cdf, turns_to_ground, ChainRecord, ChainStatsRow,
    TypeRow,
};
pub use report::{analyze, write_report, AnalysisReport, ReferenceCheck, Summary, REPORT_FILES};

/// Whether registered lexical variants are merged before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnificationMode {
    Raw,
    #[default]
    Unified,
}

impl UnificationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            UnificationMode::Raw => "raw",
            UnificationMode::Unified => "unified",
        }
    }
}

impl fmt::Display for UnificationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnificationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Self::Raw),
            "unified" => Ok(Self::Unified),
            _ => Err(format!("expected `raw` or `unified`, got `{s}`")),
        }
    }
}

/// What a comparison key retains. Instance granularity is the default;
/// name granularity ignores ordinals and exists for diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Instance,
    Name,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendingReason {
    Quantificational,
    Unspecified,
    NotAccommodated,
    NotGrounded,
}

impl PendingReason {
    pub const ALL: [PendingReason; 4] = [
        PendingReason::Quantificational,
        PendingReason::Unspecified,
        PendingReason::NotAccommodated,
        PendingReason::NotGrounded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PendingReason::Quantificational => "quantificational",
            PendingReason::Unspecified => "unspecified",
            PendingReason::NotAccommodated => "not_accommodated",
            PendingReason::NotGrounded => "not_grounded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "reason")]
pub enum UnderstandingState {
    Aligned,
    Misunderstood,
    Pending(PendingReason),
}

impl UnderstandingState {
    /// `aligned`, `misunderstood` or `pending`.
    pub fn category(self) -> &'static str {
        match self {
            UnderstandingState::Aligned => "aligned",
            UnderstandingState::Misunderstood => "misunderstood",
            UnderstandingState::Pending(_) => "pending",
        }
    }

    pub fn is_aligned(self) -> bool {
        self == UnderstandingState::Aligned
    }
}

impl fmt::Display for UnderstandingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnderstandingState::Pending(r) => write!(f, "pending:{}", r.as_str()),
            other => f.write_str(other.category()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("record {re_id} cannot be analysed: {message}")]
    InvalidRecord { re_id: String, message: String },
    #[error("record {0} names a reference expression missing from the corpus")]
    UnknownRe(String),
    #[error("no landmark index for map pair {0}")]
    UnknownMapPair(String),
    #[error("record {re_id}: landmark {key} has no discrepancy classification")]
    Unclassifiable { re_id: String, key: MtlmKey },
    #[error("record {0} appears more than once")]
    DuplicateRecord(String),
}

/// One element of a side-neutral key: map pair, name, ordinal. The ordinal
/// is `None` at name granularity.
pub type KeyElement = (String, String, Option<u32>);

/// Order-insensitive, side-erased comparison key of a landmark set.
pub type SideNeutralKey = BTreeSet<KeyElement>;

pub fn side_neutral_key(set: &LandmarkRefSet, registry: &LexicalVariantRegistry, mode: UnificationMode) -> SideNeutralKey {
    side_neutral_key_at(set, registry, mode, Granularity::Instance)
}

pub fn side_neutral_key_at(
    set: &LandmarkRefSet,
    registry: &LexicalVariantRegistry,
    mode: UnificationMode,
    granularity: Granularity,
) -> SideNeutralKey {
    set.ids()
        .iter()
        .map(|id| {
            let key = id.mtlm_key();
            let name = match mode {
                UnificationMode::Raw => key.name,
                UnificationMode::Unified => registry.canonical_name(&key).name,
            };
            let ordinal = match granularity {
                Granularity::Instance => Some(id.ordinal),
                Granularity::Name => None,
            };
            (id.map_pair_id.clone(), name, ordinal)
        })
        .collect()
}

pub fn derive_state(
    record: &AnnotationRecord,
    registry: &LexicalVariantRegistry,
    mode: UnificationMode,
) -> Result<UnderstandingState, AnalysisError> {
    derive_state_at(record, registry, mode, Granularity::Instance)
}

pub fn derive_state_at(
    record: &AnnotationRecord,
    registry: &LexicalVariantRegistry,
    mode: UnificationMode,
    granularity: Granularity,
) -> Result<UnderstandingState, AnalysisError> {
    let invalid = |message: String| AnalysisError::InvalidRecord {
        re_id: record.re_id.clone(),
        message,
    };
    let c = &record.cascade;
    if let Some(err) = c.gating_errors().into_iter().next() {
        return Err(invalid(err.to_string()));
    }
    if c.is_quantificational {
        return Ok(UnderstandingState::Pending(PendingReason::Quantificational));
    }
    if c.is_specified == Some(false) {
        return Ok(UnderstandingState::Pending(PendingReason::Unspecified));
    }
    if c.is_accommodated == Some(false) {
        return Ok(UnderstandingState::Pending(PendingReason::NotAccommodated));
    }
    if c.is_grounded == Some(false) {
        return Ok(UnderstandingState::Pending(PendingReason::NotGrounded));
    }
    if c.is_imagined() {
        return Ok(UnderstandingState::Aligned);
    }
    let (Some(spk), Some(addr)) = (&record.speaker_landmark, &record.addressee_landmark) else {
        return Err(invalid("grounded record lacks a landmark set".into()));
    };
    let same = side_neutral_key_at(spk, registry, mode, granularity) == side_neutral_key_at(addr, registry, mode, granularity);
    Ok(if same {
        UnderstandingState::Aligned
    } else {
        UnderstandingState::Misunderstood
    })
}

/// Counts per state for one mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub mode: UnificationMode,
    pub total: usize,
    pub aligned: usize,
    pub misunderstood: usize,
    pub pending: usize,
    pub pending_by_reason: BTreeMap<PendingReason, usize>,
}

impl StateDistribution {
    pub fn percent(&self, count: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * count as f64 / self.total as f64
        }
    }

    pub fn count(&self, state: UnderstandingState) -> usize {
        match state {
            UnderstandingState::Aligned => self.aligned,
            UnderstandingState::Misunderstood => self.misunderstood,
            UnderstandingState::Pending(r) => self.pending_by_reason.get(&r).copied().unwrap_or(0),
        }
    }
}

pub fn distribution(
    records: &[AnnotationRecord],
    registry: &LexicalVariantRegistry,
    mode: UnificationMode,
) -> Result<StateDistribution, AnalysisError> {
    let mut d = StateDistribution {
        mode,
        total: 0,
        aligned: 0,
        misunderstood: 0,
        pending: 0,
        pending_by_reason: PendingReason::ALL.iter().map(|r| (*r, 0)).collect(),
    };
    for record in records {
        d.total += 1;
        match derive_state(record, registry, mode)? {
            UnderstandingState::Aligned => d.aligned += 1,
            UnderstandingState::Misunderstood => d.misunderstood += 1,
            UnderstandingState::Pending(r) => {
                d.pending += 1;
                *d.pending_by_reason.entry(r).or_insert(0) += 1;
            }
        }
    }
    Ok(d)
}


#[cfg(test)]
mod tests {
    use super::test_support::registry;
    use super::*;
    use crate::annotation::test_support::{record, set};
    use crate::annotation::AttributeCascade;

    #[test]
    fn side_erasure() {
        let r = registry();
        let k = |s| side_neutral_key(&set(s), &r, UnificationMode::Raw);
        assert_eq!(k("m0_parked_van#1@g"), k("m0_parked_van#1@f"));
        assert_ne!(k("m0_parked_van#0@g"), k("m0_parked_van#1@f"));
        assert_eq!(k("m0_a#0@g+m0_b#1@g"), k("m0_b#1@f+m0_a#0@f"));
    }

    #[test]
    fn unified_mode_merges_registered_variants() {
        let r = registry();
        let (a, b) = (set("m12_old_mill#0@g"), set("m12_mill_wheel#0@f"));
        assert_ne!(side_neutral_key(&a, &r, UnificationMode::Raw), side_neutral_key(&b, &r, UnificationMode::Raw));
        assert_eq!(
            side_neutral_key(&a, &r, UnificationMode::Unified),
            side_neutral_key(&b, &r, UnificationMode::Unified)
        );
    }

    /// Hand-written table: six reachable shapes, each with a matching and a
    /// mismatching addressee set.
    #[test]
    fn truth_table() {
        use PendingReason::*;
        use UnderstandingState::*;
        let r = registry();
        let table: [(usize, &str, UnderstandingState); 12] = [
            (0, "m0_barn#0@f", Pending(Quantificational)),
            (0, "m0_barn#1@f", Pending(Quantificational)),
            (1, "m0_barn#0@f", Pending(Unspecified)),
            (1, "m0_barn#1@f", Pending(Unspecified)),
            (2, "m0_barn#0@f", Pending(NotAccommodated)),
            (2, "m0_barn#1@f", Pending(NotAccommodated)),
            (3, "m0_barn#0@f", Pending(NotGrounded)),
            (3, "m0_barn#1@f", Pending(NotGrounded)),
            (4, "m0_barn#0@f", Aligned),
            (4, "m0_barn#1@f", Misunderstood),
            (5, "m0_barn#0@f", Aligned),
            (5, "m0_barn#1@f", Aligned),
        ];
        for (shape, addr, expected) in table {
            let rec = record("re", AttributeCascade::REACHABLE[shape], "m0_barn#0@g", addr);
            for mode in [UnificationMode::Raw, UnificationMode::Unified] {
                assert_eq!(derive_state(&rec, &r, mode).unwrap(), expected, "shape {shape} {addr}");
            }
        }
    }

    #[test]
    fn quantificational_question_is_pending() {
        let mut rec = record("re", AttributeCascade::REACHABLE[0], "m0_parked_van#0@f", "");
        rec.speaker_landmark = None;
        assert_eq!(
            derive_state(&rec, &registry(), UnificationMode::Raw).unwrap(),
            UnderstandingState::Pending(PendingReason::Quantificational)
        );
    }

    #[test]
    fn name_granularity_ignores_ordinals() {
        let rec = record("re", AttributeCascade::REACHABLE[4], "m0_parked_van#0@g", "m0_parked_van#1@f");
        let r = registry();
        assert_eq!(derive_state(&rec, &r, UnificationMode::Raw).unwrap(), UnderstandingState::Misunderstood);
        assert_eq!(
            derive_state_at(&rec, &r, UnificationMode::Raw, Granularity::Name).unwrap(),
            UnderstandingState::Aligned
        );
    }

    #[test]
    fn invalid_record_is_an_error() {
        let mut rec = record("re", AttributeCascade::REACHABLE[4], "m0_barn#0@g", "m0_barn#0@f");
        rec.cascade.is_specified = None;
        assert!(derive_state(&rec, &registry(), UnificationMode::Raw).is_err());
    }

    /// Two aligned, one quantificational, one unspecified, one lexical mismatch.
    #[test]
    fn five_record_fixture_distribution() {
        let r = registry();
        let records = vec![
            record("a", AttributeCascade::REACHABLE[4], "m12_barn#0@g", "m12_barn#0@f"),
            record("b", AttributeCascade::REACHABLE[5], "m12_well#0@g", ""),
            record("c", AttributeCascade::REACHABLE[0], "m12_barn#0@g", ""),
            record("d", AttributeCascade::REACHABLE[1], "m12_barn#0@g", ""),
            record("e", AttributeCascade::REACHABLE[4], "m12_old_mill#0@g", "m12_mill_wheel#0@f"),
        ];
        let raw = distribution(&records, &r, UnificationMode::Raw).unwrap();
        let uni = distribution(&records, &r, UnificationMode::Unified).unwrap();
        assert_eq!((raw.aligned, raw.pending, raw.misunderstood), (2, 2, 1));
        assert_eq!((uni.aligned, uni.pending, uni.misunderstood), (3, 2, 0));
        assert_eq!(raw.pending_by_reason, uni.pending_by_reason);
        assert_eq!(raw.total, 5);
    }

    #[test]
    fn state_labels() {
        assert_eq!(UnderstandingState::Pending(PendingReason::NotGrounded).to_string(), "pending:not_grounded");
        assert_eq!(UnderstandingState::Aligned.to_string(), "aligned");
        assert_eq!(
            serde_json::to_string(&UnderstandingState::Pending(PendingReason::Unspecified)).unwrap(),
            r#"{"state":"pending","reason":"unspecified"}"#
        );
    }
}
