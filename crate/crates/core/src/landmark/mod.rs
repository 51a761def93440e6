//! Unified landmark ids, ordinal assignment and discrepancy classification.

mod assign;
mod id;
mod registry;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use assign::{assign_unified_ids, AssignError, AssignedLandmark, MapPairIndex, NameCounts};
pub use id::{
    format_umlm, is_valid_map_id, is_valid_name, mtlm_key, parse_ref_set, parse_umlm, IdParseError, LandmarkRefSet, MtlmKey,
    RefSetError, UnifiedLandmarkId,
};
pub use registry::{
    canonical_name, classify_discrepancy, ClassifyError, IndexWarning, LexicalVariantPair,
    LexicalVariantRegistry, RegistryError,
};

use crate::corpus::MapLandmarkInstance;
use crate::SpeakerRole;

/// How the landmarks of a map pair differ between the two sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscrepancyType {
    /// Same place, different label on each side.
    Lexical,
    /// Present on one side only.
    Existence,
    /// Instance counts differ, with at least one instance shared.
    Multiplicity,
    Identical,
}

impl DiscrepancyType {
    pub const ALL: [DiscrepancyType; 4] = [
        DiscrepancyType::Lexical,
        DiscrepancyType::Existence,
        DiscrepancyType::Multiplicity,
        DiscrepancyType::Identical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiscrepancyType::Lexical => "lexical",
            DiscrepancyType::Existence => "existence",
            DiscrepancyType::Multiplicity => "multiplicity",
            DiscrepancyType::Identical => "identical",
        }
    }
}

impl fmt::Display for DiscrepancyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiscrepancyType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown discrepancy type `{s}`"))
    }
}

/// Distance under which same-name instances on opposite sides are treated as
/// one shared landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    /// Fixed distance in map units.
    Absolute(f64),
    /// Fraction of the diagonal of the map pair's landmark bounding box.
    DiagonalFraction(f64),
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::DiagonalFraction(0.02)
    }
}

impl Epsilon {
    pub fn resolve(self, landmarks: &[MapLandmarkInstance]) -> f64 {
        match self {
            Epsilon::Absolute(d) => d,
            Epsilon::DiagonalFraction(frac) => {
                if landmarks.is_empty() {
                    return 0.0;
                }
                let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
                for lm in landmarks {
                    x0 = x0.min(lm.x);
                    y0 = y0.min(lm.y);
                    x1 = x1.max(lm.x);
                    y1 = y1.max(lm.y);
                }
                frac * ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
            }
        }
    }
}

/// Candidate listing for prompts: every id of both sides, giver side first,
/// then by name and ordinal, one per line.
pub fn landmark_candidates(index: &MapPairIndex) -> String {
    let mut out = String::new();
    for side in SpeakerRole::ALL {
        for inst in index.instances().iter().filter(|a| a.umlm.side == side) {
            out.push_str(&inst.umlm.to_string());
            out.push('\n');
        }
    }
    out
}
