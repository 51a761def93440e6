use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Participant role in an asymmetric map dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerRole {
    /// Instruction giver: holds the map with the route.
    Giver,
    /// Instruction follower: reproduces the route.
    Follower,
}

impl SpeakerRole {
    pub const ALL: [SpeakerRole; 2] = [SpeakerRole::Giver, SpeakerRole::Follower];

    pub fn opposite(self) -> Self {
        match self {
            SpeakerRole::Giver => SpeakerRole::Follower,
            SpeakerRole::Follower => SpeakerRole::Giver,
        }
    }

    /// Single-letter side tag used in landmark ids and dialogue-act listings.
    pub fn tag(self) -> char {
        match self {
            SpeakerRole::Giver => 'g',
            SpeakerRole::Follower => 'f',
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "g" => Some(SpeakerRole::Giver),
            "f" => Some(SpeakerRole::Follower),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpeakerRole::Giver => "giver",
            SpeakerRole::Follower => "follower",
        }
    }
}

impl fmt::Display for SpeakerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpeakerRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "giver" | "g" => Ok(SpeakerRole::Giver),
            "follower" | "f" => Ok(SpeakerRole::Follower),
            other => Err(format!("unknown speaker role `{other}`")),
        }
    }
}
