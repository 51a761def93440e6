use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::id::{MtlmKey, UnifiedLandmarkId};
use super::DiscrepancyType;
use crate::corpus::MapLandmarkInstance;
use crate::SpeakerRole;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignError {
    #[error("landmarks span several map pairs: {0} and {1}")]
    MixedMapPairs(String, String),
    #[error("invalid landmark name `{0}`")]
    InvalidName(String),
    #[error("two {side} instances of `{name}` share position ({x}, {y})")]
    DuplicatePosition {
        side: SpeakerRole,
        name: String,
        x: f64,
        y: f64,
    },
    #[error("ambiguous shared-instance matching for `{name}` at ({x}, {y}) on the {side} side: {candidates} counterparts within epsilon")]
    AmbiguousMatch {
        name: String,
        side: SpeakerRole,
        x: f64,
        y: f64,
        candidates: usize,
    },
    #[error("duplicate ordinal for `{0}`")]
    DuplicateOrdinal(String),
}

/// A landmark instance together with the unified id it was assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedLandmark {
    pub umlm: UnifiedLandmarkId,
    pub x: f64,
    pub y: f64,
    /// True when the instance was matched with a same-name instance on the
    /// opposite side.
    pub shared: bool,
}

/// Per-name occurrence summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NameCounts {
    pub giver: usize,
    pub follower: usize,
    pub shared: usize,
}

impl NameCounts {
    pub fn on(&self, side: SpeakerRole) -> usize {
        match side {
            SpeakerRole::Giver => self.giver,
            SpeakerRole::Follower => self.follower,
        }
    }
}

/// All unified ids of one map pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPairIndex {
    map_pair_id: String,
    epsilon: f64,
    /// Sorted by (side, name, ordinal).
    instances: Vec<AssignedLandmark>,
    pub(crate) discrepancy: BTreeMap<MtlmKey, DiscrepancyType>,
}

impl MapPairIndex {
    pub fn empty(map_pair_id: impl Into<String>, epsilon: f64) -> Self {
        Self {
            map_pair_id: map_pair_id.into(),
            epsilon,
            instances: Vec::new(),
            discrepancy: BTreeMap::new(),
        }
    }

    /// Rebuilds an index from previously assigned instances.
    pub fn from_assigned(
        map_pair_id: impl Into<String>,
        epsilon: f64,
        mut instances: Vec<AssignedLandmark>,
    ) -> Result<Self, AssignError> {
        let map_pair_id = map_pair_id.into();
        for inst in &instances {
            if inst.umlm.map_pair_id != map_pair_id {
                return Err(AssignError::MixedMapPairs(
                    map_pair_id.clone(),
                    inst.umlm.map_pair_id.clone(),
                ));
            }
        }
        instances.sort_by(|a, b| id_order(&a.umlm, &b.umlm));
        if let Some(w) = instances.windows(2).find(|w| w[0].umlm == w[1].umlm) {
            return Err(AssignError::DuplicateOrdinal(w[0].umlm.to_string()));
        }
        Ok(Self {
            map_pair_id,
            epsilon,
            instances,
            discrepancy: BTreeMap::new(),
        })
    }

    pub fn map_pair_id(&self) -> &str {
        &self.map_pair_id
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn instances(&self) -> &[AssignedLandmark] {
        &self.instances
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &UnifiedLandmarkId) -> Option<&AssignedLandmark> {
        self.instances
            .binary_search_by(|probe| id_order(&probe.umlm, id))
            .ok()
            .map(|i| &self.instances[i])
    }

    pub fn contains(&self, id: &UnifiedLandmarkId) -> bool {
        self.get(id).is_some()
    }

    pub fn on_side<'a>(
        &'a self,
        side: SpeakerRole,
        name: &'a str,
    ) -> impl Iterator<Item = &'a AssignedLandmark> + 'a {
        self.instances
            .iter()
            .filter(move |a| a.umlm.side == side && a.umlm.name == name)
    }

    pub fn counts(&self, name: &str) -> NameCounts {
        let mut counts = NameCounts::default();
        for inst in self.instances.iter().filter(|a| a.umlm.name == name) {
            match inst.umlm.side {
                SpeakerRole::Giver => counts.giver += 1,
                SpeakerRole::Follower => counts.follower += 1,
            }
            if inst.shared && inst.umlm.side == SpeakerRole::Giver {
                counts.shared += 1;
            }
        }
        counts
    }

    /// Every name-level key present on at least one side.
    pub fn keys(&self) -> BTreeSet<MtlmKey> {
        self.instances.iter().map(|a| a.umlm.mtlm_key()).collect()
    }

    /// Discrepancy type recorded by [`MapPairIndex::classify_all`].
    pub fn discrepancy(&self, key: &MtlmKey) -> Option<DiscrepancyType> {
        self.discrepancy.get(key).copied()
    }

    pub fn discrepancies(&self) -> &BTreeMap<MtlmKey, DiscrepancyType> {
        &self.discrepancy
    }
}

fn id_order(a: &UnifiedLandmarkId, b: &UnifiedLandmarkId) -> Ordering {
    (a.side, &a.name, a.ordinal, &a.map_pair_id).cmp(&(b.side, &b.name, b.ordinal, &b.map_pair_id))
}

pub(crate) fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Assigns unified ids to every landmark instance of one map pair.
///
/// Same-name instances on opposite sides within `epsilon` of each other are
/// shared and receive one ordinal. Within a name, ordinals ascend bottom to
/// top (`y`, then `x`, then giver before follower) over the giver instances
/// plus the unmatched follower instances.
pub fn assign_unified_ids(
    landmarks: &[MapLandmarkInstance],
    epsilon: f64,
) -> Result<MapPairIndex, AssignError> {
    let Some(first) = landmarks.first() else {
        return Ok(MapPairIndex::empty("", epsilon));
    };
    let map_pair_id = first.map_pair_id.clone();

    let mut by_name: BTreeMap<&str, [Vec<&MapLandmarkInstance>; 2]> = BTreeMap::new();
    for lm in landmarks {
        if lm.map_pair_id != map_pair_id {
            return Err(AssignError::MixedMapPairs(
                map_pair_id,
                lm.map_pair_id.clone(),
            ));
        }
        if !super::id::is_valid_name(&lm.name) {
            return Err(AssignError::InvalidName(lm.name.clone()));
        }
        let slot = match lm.side {
            SpeakerRole::Giver => 0,
            SpeakerRole::Follower => 1,
        };
        by_name.entry(&lm.name).or_default()[slot].push(lm);
    }

    let mut instances = Vec::with_capacity(landmarks.len());
    for (name, [givers, followers]) in by_name {
        for (side, group) in [(SpeakerRole::Giver, &givers), (SpeakerRole::Follower, &followers)] {
            for (i, a) in group.iter().enumerate() {
                if let Some(b) = group[i + 1..].iter().find(|b| a.x == b.x && a.y == b.y) {
                    return Err(AssignError::DuplicatePosition {
                        side,
                        name: name.to_string(),
                        x: b.x,
                        y: b.y,
                    });
                }
            }
        }

        // match_of_follower[j] = index of the giver instance it is shared with
        let mut giver_hits = vec![0usize; givers.len()];
        let mut match_of_follower: Vec<Option<usize>> = vec![None; followers.len()];
        for (j, f) in followers.iter().enumerate() {
            let near: Vec<usize> = givers
                .iter()
                .enumerate()
                .filter(|(_, g)| distance((g.x, g.y), (f.x, f.y)) <= epsilon)
                .map(|(i, _)| i)
                .collect();
            if near.len() > 1 {
                return Err(AssignError::AmbiguousMatch {
                    name: name.to_string(),
                    side: SpeakerRole::Follower,
                    x: f.x,
                    y: f.y,
                    candidates: near.len(),
                });
            }
            if let Some(&i) = near.first() {
                giver_hits[i] += 1;
                match_of_follower[j] = Some(i);
            }
        }
        if let Some(i) = giver_hits.iter().position(|&n| n > 1) {
            return Err(AssignError::AmbiguousMatch {
                name: name.to_string(),
                side: SpeakerRole::Giver,
                x: givers[i].x,
                y: givers[i].y,
                candidates: giver_hits[i],
            });
        }

        // Unified ordering over giver instances and unmatched follower instances.
        let mut slots: Vec<(SpeakerRole, usize, f64, f64)> = givers
            .iter()
            .enumerate()
            .map(|(i, g)| (SpeakerRole::Giver, i, g.x, g.y))
            .collect();
        slots.extend(
            followers
                .iter()
                .enumerate()
                .filter(|(j, _)| match_of_follower[*j].is_none())
                .map(|(j, f)| (SpeakerRole::Follower, j, f.x, f.y)),
        );
        slots.sort_by(|a, b| {
            a.3.total_cmp(&b.3)
                .then(a.2.total_cmp(&b.2))
                .then(a.0.cmp(&b.0))
        });

        let mut giver_ordinal = vec![0u32; givers.len()];
        for (ordinal, (side, i, x, y)) in slots.into_iter().enumerate() {
            let ordinal = ordinal as u32;
            match side {
                SpeakerRole::Giver => giver_ordinal[i] = ordinal,
                SpeakerRole::Follower => instances.push(AssignedLandmark {
                    umlm: UnifiedLandmarkId::new(&map_pair_id, name, ordinal, SpeakerRole::Follower),
                    x,
                    y,
                    shared: false,
                }),
            }
        }
        for (i, g) in givers.iter().enumerate() {
            instances.push(AssignedLandmark {
                umlm: UnifiedLandmarkId::new(&map_pair_id, name, giver_ordinal[i], SpeakerRole::Giver),
                x: g.x,
                y: g.y,
                shared: giver_hits[i] == 1,
            });
        }
        for (j, f) in followers.iter().enumerate() {
            if let Some(i) = match_of_follower[j] {
                instances.push(AssignedLandmark {
                    umlm: UnifiedLandmarkId::new(&map_pair_id, name, giver_ordinal[i], SpeakerRole::Follower),
                    x: f.x,
                    y: f.y,
                    shared: true,
                });
            }
        }
    }

    MapPairIndex::from_assigned(map_pair_id, epsilon, instances)
}
