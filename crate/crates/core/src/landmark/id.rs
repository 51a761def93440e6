//! Unified landmark identifiers.
//!
//! Grammar: `<map-id>_<landmark-name>#<ordinal>@<side>` where
//!
//! - `map-id` matches `[a-z0-9]+` (no underscore, so the first `_` splits it off),
//! - `landmark-name` matches `[a-z0-9_]+`,
//! - `ordinal` is a decimal integer without leading zeros,
//! - `side` is `g` (giver) or `f` (follower).
//!
//! Several ids referenced at once are joined with `+`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::SpeakerRole;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdParseError {
    #[error("empty landmark id")]
    Empty,
    #[error("landmark id contains whitespace")]
    Whitespace,
    #[error("missing `_` between map id and landmark name")]
    MissingMapSeparator,
    #[error("invalid map id `{0}`")]
    InvalidMapId(String),
    #[error("missing `#` before ordinal")]
    MissingOrdinal,
    #[error("missing `@` before side")]
    MissingSide,
    #[error("invalid ordinal `{0}`")]
    InvalidOrdinal(String),
    #[error("invalid side `{0}`, expected `g` or `f`")]
    InvalidSide(String),
    #[error("empty landmark name")]
    EmptyName,
    #[error("invalid landmark name `{0}`")]
    InvalidName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefSetError {
    #[error("empty landmark reference set")]
    Empty,
    #[error("element {index}: {source}")]
    Element {
        index: usize,
        #[source]
        source: IdParseError,
    },
    #[error("duplicate landmark id `{0}`")]
    Duplicate(String),
    #[error("landmark ids mix map sides")]
    MixedSide,
    #[error("landmark ids mix map pairs")]
    MixedMapPair,
}

pub fn is_valid_map_id(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
}

pub fn is_valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// One landmark instance on one side of a map pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnifiedLandmarkId {
    pub map_pair_id: String,
    pub name: String,
    pub ordinal: u32,
    pub side: SpeakerRole,
}

impl UnifiedLandmarkId {
    pub fn new(
        map_pair_id: impl Into<String>,
        name: impl Into<String>,
        ordinal: u32,
        side: SpeakerRole,
    ) -> Self {
        Self {
            map_pair_id: map_pair_id.into(),
            name: name.into(),
            ordinal,
            side,
        }
    }

    /// Name-level identity, blind to side and ordinal.
    pub fn mtlm_key(&self) -> MtlmKey {
        MtlmKey::new(self.map_pair_id.clone(), self.name.clone())
    }

    pub fn with_side(&self, side: SpeakerRole) -> Self {
        Self {
            side,
            ..self.clone()
        }
    }
}

pub fn parse_umlm(text: &str) -> Result<UnifiedLandmarkId, IdParseError> {
    if text.is_empty() {
        return Err(IdParseError::Empty);
    }
    if text.chars().any(char::is_whitespace) {
        return Err(IdParseError::Whitespace);
    }
    let (map_pair_id, rest) = text
        .split_once('_')
        .ok_or(IdParseError::MissingMapSeparator)?;
    if !is_valid_map_id(map_pair_id) {
        return Err(IdParseError::InvalidMapId(map_pair_id.to_string()));
    }
    let (head, side) = rest.rsplit_once('@').ok_or(IdParseError::MissingSide)?;
    let side = SpeakerRole::from_tag(side).ok_or_else(|| IdParseError::InvalidSide(side.into()))?;
    let (name, ordinal) = head.rsplit_once('#').ok_or(IdParseError::MissingOrdinal)?;
    let canonical_digits = !ordinal.is_empty()
        && ordinal.bytes().all(|b| b.is_ascii_digit())
        && (ordinal == "0" || !ordinal.starts_with('0'));
    if !canonical_digits {
        return Err(IdParseError::InvalidOrdinal(ordinal.to_string()));
    }
    let ordinal: u32 = ordinal
        .parse()
        .map_err(|_| IdParseError::InvalidOrdinal(ordinal.to_string()))?;
    if name.is_empty() {
        return Err(IdParseError::EmptyName);
    }
    if !is_valid_name(name) {
        return Err(IdParseError::InvalidName(name.to_string()));
    }
    Ok(UnifiedLandmarkId {
        map_pair_id: map_pair_id.to_string(),
        name: name.to_string(),
        ordinal,
        side,
    })
}

pub fn format_umlm(id: &UnifiedLandmarkId) -> String {
    id.to_string()
}

impl fmt::Display for UnifiedLandmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}_{}#{}@{}",
            self.map_pair_id,
            self.name,
            self.ordinal,
            self.side.tag()
        )
    }
}

impl FromStr for UnifiedLandmarkId {
    type Err = IdParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_umlm(s)
    }
}

impl Serialize for UnifiedLandmarkId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UnifiedLandmarkId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_umlm(&s).map_err(serde::de::Error::custom)
    }
}

/// Name-level landmark identity (`<map-id>_<name>`), as in the source corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MtlmKey {
    pub map_pair_id: String,
    pub name: String,
}

impl MtlmKey {
    pub fn new(map_pair_id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            map_pair_id: map_pair_id.into(),
            name: name.into(),
        }
    }
}

pub fn mtlm_key(id: &UnifiedLandmarkId) -> MtlmKey {
    id.mtlm_key()
}

impl fmt::Display for MtlmKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.map_pair_id, self.name)
    }
}

impl FromStr for MtlmKey {
    type Err = IdParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(IdParseError::Empty);
        }
        let (map, name) = s.split_once('_').ok_or(IdParseError::MissingMapSeparator)?;
        if !is_valid_map_id(map) {
            return Err(IdParseError::InvalidMapId(map.to_string()));
        }
        if !is_valid_name(name) {
            return Err(if name.is_empty() {
                IdParseError::EmptyName
            } else {
                IdParseError::InvalidName(name.to_string())
            });
        }
        Ok(MtlmKey::new(map, name))
    }
}

impl Serialize for MtlmKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MtlmKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Non-empty set of landmark ids on one side of one map pair, kept in
/// ascending `(name, ordinal)` order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LandmarkRefSet {
    ids: Vec<UnifiedLandmarkId>,
}

impl LandmarkRefSet {
    pub fn new(ids: Vec<UnifiedLandmarkId>) -> Result<Self, RefSetError> {
        let first = ids.first().ok_or(RefSetError::Empty)?;
        if ids.iter().any(|id| id.map_pair_id != first.map_pair_id) {
            return Err(RefSetError::MixedMapPair);
        }
        if ids.iter().any(|id| id.side != first.side) {
            return Err(RefSetError::MixedSide);
        }
        let mut ids = ids;
        ids.sort_by(|a, b| (&a.name, a.ordinal).cmp(&(&b.name, b.ordinal)));
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(RefSetError::Duplicate(w[0].to_string()));
        }
        Ok(Self { ids })
    }

    pub fn single(id: UnifiedLandmarkId) -> Self {
        Self { ids: vec![id] }
    }

    pub fn ids(&self) -> &[UnifiedLandmarkId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn side(&self) -> SpeakerRole {
        self.ids[0].side
    }

    pub fn map_pair_id(&self) -> &str {
        &self.ids[0].map_pair_id
    }

    /// The same ids re-tagged with another side.
    pub fn with_side(&self, side: SpeakerRole) -> Self {
        Self {
            ids: self.ids.iter().map(|id| id.with_side(side)).collect(),
        }
    }
}

pub fn parse_ref_set(text: &str) -> Result<LandmarkRefSet, RefSetError> {
    if text.is_empty() {
        return Err(RefSetError::Empty);
    }
    let ids = text
        .split('+')
        .enumerate()
        .map(|(index, part)| parse_umlm(part).map_err(|source| RefSetError::Element { index, source }))
        .collect::<Result<Vec<_>, _>>()?;
    LandmarkRefSet::new(ids)
}

impl fmt::Display for LandmarkRefSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, id) in self.ids.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{id}")?;
        }
        Ok(())
    }
}

impl FromStr for LandmarkRefSet {
    type Err = RefSetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_ref_set(s)
    }
}

impl Serialize for LandmarkRefSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LandmarkRefSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_ref_set(&s).map_err(serde::de::Error::custom)
    }
}
