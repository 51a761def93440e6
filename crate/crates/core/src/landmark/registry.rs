use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::assign::{distance, MapPairIndex};
use super::id::{is_valid_map_id, is_valid_name, MtlmKey};
use super::DiscrepancyType;
use crate::SpeakerRole;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid pair {0}: {1}")]
    InvalidPair(String, String),
    #[error("`{0}` appears in more than one lexical pair")]
    Overlap(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("landmark `{0}` is not in the map pair index")]
    UnknownKey(String),
    #[error("`{0}` is both a lexical variant and duplicated on one map")]
    MixedCategory(String),
}

/// One registered pair of name variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalVariantPair {
    pub map_pair_id: String,
    pub name_a: String,
    pub name_b: String,
    pub canonical_name: String,
}

impl LexicalVariantPair {
    fn describe(&self) -> String {
        format!("{}:{}/{}", self.map_pair_id, self.name_a, self.name_b)
    }
}

/// Registered lexical variants, supplied as configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexicalVariantRegistry {
    pairs: Vec<LexicalVariantPair>,
    // member key -> pair index
    members: BTreeMap<MtlmKey, usize>,
}

impl LexicalVariantRegistry {
    pub fn new(pairs: Vec<LexicalVariantPair>) -> Result<Self, RegistryError> {
        let mut members = BTreeMap::new();
        for (i, pair) in pairs.iter().enumerate() {
            if !is_valid_map_id(&pair.map_pair_id) {
                return Err(RegistryError::InvalidPair(pair.describe(), "invalid map id".into()));
            }
            for name in [&pair.name_a, &pair.name_b] {
                if !is_valid_name(name) {
                    return Err(RegistryError::InvalidPair(
                        pair.describe(),
                        format!("invalid name `{name}`"),
                    ));
                }
            }
            if pair.name_a == pair.name_b {
                return Err(RegistryError::InvalidPair(pair.describe(), "members are equal".into()));
            }
            if pair.canonical_name != pair.name_a && pair.canonical_name != pair.name_b {
                return Err(RegistryError::InvalidPair(
                    pair.describe(),
                    format!("canonical name `{}` is not a member", pair.canonical_name),
                ));
            }
            for name in [&pair.name_a, &pair.name_b] {
                let key = MtlmKey::new(&pair.map_pair_id, name);
                if members.insert(key.clone(), i).is_some() {
                    return Err(RegistryError::Overlap(key.to_string()));
                }
            }
        }
        Ok(Self { pairs, members })
    }

    /// Reads one pair per JSONL line; blank lines are skipped.
    pub fn from_jsonl(reader: impl BufRead) -> Result<Self, RegistryError> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| RegistryError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let pair = serde_json::from_str(&line).map_err(|e| RegistryError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            pairs.push(pair);
        }
        Self::new(pairs)
    }

    pub fn to_jsonl(&self) -> String {
        self.pairs
            .iter()
            .map(|p| serde_json::to_string(p).expect("pair serializes") + "\n")
            .collect()
    }

    pub fn pairs(&self) -> &[LexicalVariantPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_registered(&self, key: &MtlmKey) -> bool {
        self.members.contains_key(key)
    }

    /// The other member of the key's pair.
    pub fn partner(&self, key: &MtlmKey) -> Option<MtlmKey> {
        let pair = &self.pairs[*self.members.get(key)?];
        let other = if pair.name_a == key.name {
            &pair.name_b
        } else {
            &pair.name_a
        };
        Some(MtlmKey::new(&pair.map_pair_id, other))
    }

    pub fn canonical_name(&self, key: &MtlmKey) -> MtlmKey {
        match self.members.get(key) {
            Some(&i) => MtlmKey::new(&key.map_pair_id, &self.pairs[i].canonical_name),
            None => key.clone(),
        }
    }
}

pub fn canonical_name(registry: &LexicalVariantRegistry, key: &MtlmKey) -> MtlmKey {
    registry.canonical_name(key)
}

/// Sides on which a name occurs, if it occurs on exactly one.
fn sole_side(index: &MapPairIndex, name: &str) -> Option<SpeakerRole> {
    let c = index.counts(name);
    match (c.giver, c.follower) {
        (g, 0) if g > 0 => Some(SpeakerRole::Giver),
        (0, f) if f > 0 => Some(SpeakerRole::Follower),
        _ => None,
    }
}

fn lexically_matched(index: &MapPairIndex, key: &MtlmKey, partner: &MtlmKey) -> bool {
    let (Some(side), Some(partner_side)) = (sole_side(index, &key.name), sole_side(index, &partner.name)) else {
        return false;
    };
    if side == partner_side {
        return false;
    }
    index.on_side(side, &key.name).any(|a| {
        index
            .on_side(partner_side, &partner.name)
            .any(|b| distance((a.x, a.y), (b.x, b.y)) <= index.epsilon())
    })
}

/// Classifies one name-level landmark of a map pair.
pub fn classify_discrepancy(
    index: &MapPairIndex,
    registry: &LexicalVariantRegistry,
    key: &MtlmKey,
) -> Result<DiscrepancyType, ClassifyError> {
    let counts = index.counts(&key.name);
    if key.map_pair_id != index.map_pair_id() || counts.giver + counts.follower == 0 {
        return Err(ClassifyError::UnknownKey(key.to_string()));
    }
    if let Some(partner) = registry.partner(key) {
        if lexically_matched(index, key, &partner) {
            return Ok(DiscrepancyType::Lexical);
        }
    }
    if counts.giver == 0 || counts.follower == 0 {
        return Ok(DiscrepancyType::Existence);
    }
    if counts.giver != counts.follower && counts.shared >= 1 {
        return Ok(DiscrepancyType::Multiplicity);
    }
    Ok(DiscrepancyType::Identical)
}

/// Something worth reviewing in the registry or the landmark inventory that
/// does not prevent classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndexWarning {
    pub key: String,
    pub message: String,
}

impl MapPairIndex {
    /// Classifies every key of the index and stores the result.
    pub fn classify_all(
        &mut self,
        registry: &LexicalVariantRegistry,
    ) -> Result<Vec<IndexWarning>, ClassifyError> {
        let mut warnings = Vec::new();
        let mut table = BTreeMap::new();
        for key in self.keys() {
            let kind = classify_discrepancy(self, registry, &key)?;
            let counts = self.counts(&key.name);
            if kind == DiscrepancyType::Lexical && (counts.giver > 1 || counts.follower > 1) {
                return Err(ClassifyError::MixedCategory(key.to_string()));
            }
            if registry.is_registered(&key) && kind != DiscrepancyType::Lexical {
                warnings.push(IndexWarning {
                    key: key.to_string(),
                    message: format!(
                        "registered lexical variant does not face its partner across sides; classified as {kind}"
                    ),
                });
            }
            if kind == DiscrepancyType::Identical && counts.giver != counts.follower {
                warnings.push(IndexWarning {
                    key: key.to_string(),
                    message: "instance counts differ but no instance is shared".into(),
                });
            }
            table.insert(key, kind);
        }
        self.discrepancy = table;
        Ok(warnings)
    }
}
