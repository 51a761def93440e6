//! In-memory model of a MapTask-style corpus.
//!
//! A corpus holds dialogues (timed units, moves, transactions and reference
//! expressions) and per-map-pair landmark inventories. It is built once by
//! [`ingest_corpus`] and treated as immutable afterwards.

mod ingest;
mod validate;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{
    ingest_corpus, write_interchange, CorpusSource, IngestError, IngestOptions, Ingested,
    JsonlDirSource, Located, SourceRecords, INTERCHANGE_FILES,
};
pub use validate::validate_corpus;

use crate::diagnostics::Severity;
use crate::landmark::MtlmKey;
use crate::SpeakerRole;

/// Word-level transcription unit with timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedUnit {
    pub unit_id: String,
    pub dialogue_id: String,
    pub role: SpeakerRole,
    pub start_s: f64,
    pub end_s: f64,
    pub token: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveType {
    Instruct,
    Explain,
    Check,
    Align,
    QueryYn,
    QueryW,
    Acknowledge,
    ReplyY,
    ReplyN,
    ReplyW,
    Clarify,
    Ready,
    Other,
}

impl MoveType {
    pub fn as_str(self) -> &'static str {
        match self {
            MoveType::Instruct => "instruct",
            MoveType::Explain => "explain",
            MoveType::Check => "check",
            MoveType::Align => "align",
            MoveType::QueryYn => "query_yn",
            MoveType::QueryW => "query_w",
            MoveType::Acknowledge => "acknowledge",
            MoveType::ReplyY => "reply_y",
            MoveType::ReplyN => "reply_n",
            MoveType::ReplyW => "reply_w",
            MoveType::Clarify => "clarify",
            MoveType::Ready => "ready",
            MoveType::Other => "other",
        }
    }
}

impl fmt::Display for MoveType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One dialogue move; each move is one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueMove {
    pub move_id: String,
    pub dialogue_id: String,
    pub role: SpeakerRole,
    pub move_type: MoveType,
    pub utterance_index: u32,
    pub unit_span: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub transaction_index: u32,
    pub dialogue_id: String,
    pub move_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceExpressionSpan {
    pub re_id: String,
    pub dialogue_id: String,
    /// The speaker.
    pub role: SpeakerRole,
    pub unit_span: Vec<String>,
    pub surface_text: String,
    pub original_mtlm: MtlmKey,
    pub transaction_index: u32,
}

/// A landmark drawn on one side of a map pair, in abstract map units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLandmarkInstance {
    pub map_pair_id: String,
    pub side: SpeakerRole,
    pub name: String,
    pub x: f64,
    pub y: f64,
}

/// Row of `dialogues.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub dialogue_id: String,
    pub map_pair_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub map_pair_id: String,
    /// Ordered by `(start_s, unit_id)`.
    pub units: Vec<TimedUnit>,
    /// Ordered by the time of each move's first unit.
    pub moves: Vec<DialogueMove>,
    /// Ordered by index.
    pub transactions: Vec<Transaction>,
    /// Ordered by first unit, then id.
    pub res: Vec<ReferenceExpressionSpan>,
}

impl Dialogue {
    pub fn unit(&self, unit_id: &str) -> Option<&TimedUnit> {
        self.units.iter().find(|u| u.unit_id == unit_id)
    }

    pub fn unit_map(&self) -> HashMap<&str, &TimedUnit> {
        self.units.iter().map(|u| (u.unit_id.as_str(), u)).collect()
    }

    pub fn unit_position(&self, unit_id: &str) -> Option<usize> {
        self.units.iter().position(|u| u.unit_id == unit_id)
    }

    pub fn find_move(&self, move_id: &str) -> Option<&DialogueMove> {
        self.moves.iter().find(|m| m.move_id == move_id)
    }

    pub fn move_of_unit(&self, unit_id: &str) -> Option<&DialogueMove> {
        self.moves
            .iter()
            .find(|m| m.unit_span.iter().any(|u| u == unit_id))
    }

    pub fn transaction_of_move(&self, move_id: &str) -> Option<u32> {
        self.transactions
            .iter()
            .find(|t| t.move_ids.iter().any(|m| m == move_id))
            .map(|t| t.transaction_index)
    }

    pub fn transaction_of_unit(&self, unit_id: &str) -> Option<u32> {
        self.transaction_of_move(&self.move_of_unit(unit_id)?.move_id)
    }

    pub fn re(&self, re_id: &str) -> Option<&ReferenceExpressionSpan> {
        self.res.iter().find(|r| r.re_id == re_id)
    }

    /// Utterance index of the move holding the RE's first unit.
    pub fn utterance_of_re(&self, re: &ReferenceExpressionSpan) -> Option<u32> {
        let first = re.unit_span.first()?;
        self.move_of_unit(first).map(|m| m.utterance_index)
    }

    pub fn res_in_transaction(&self, index: u32) -> impl Iterator<Item = &ReferenceExpressionSpan> {
        self.res.iter().filter(move |r| r.transaction_index == index)
    }

    /// Space-joined tokens of a move.
    pub fn move_text(&self, mv: &DialogueMove) -> String {
        mv.unit_span
            .iter()
            .filter_map(|u| self.unit(u).map(|u| u.token.as_str()))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub dialogues: BTreeMap<String, Dialogue>,
    /// Landmark inventory per map pair, both sides.
    pub map_pairs: BTreeMap<String, Vec<MapLandmarkInstance>>,
    pub provenance: String,
}

impl Corpus {
    pub fn dialogue(&self, dialogue_id: &str) -> Option<&Dialogue> {
        self.dialogues.get(dialogue_id)
    }

    pub fn re_count(&self) -> usize {
        self.dialogues.values().map(|d| d.res.len()).sum()
    }

    pub fn move_count(&self) -> usize {
        self.dialogues.values().map(|d| d.moves.len()).sum()
    }

    /// Lookup table from RE id to its dialogue and span.
    pub fn re_map(&self) -> HashMap<&str, (&Dialogue, &ReferenceExpressionSpan)> {
        self.dialogues
            .values()
            .flat_map(|d| d.res.iter().map(move |r| (r.re_id.as_str(), (d, r))))
            .collect()
    }

    pub fn find_re(&self, re_id: &str) -> Option<(&Dialogue, &ReferenceExpressionSpan)> {
        self.dialogues
            .values()
            .find_map(|d| d.re(re_id).map(|r| (d, r)))
    }
}

/// Where a corpus diagnostic points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Locus {
    Line { file: String, line: usize },
    Entity { kind: String, id: String },
}

impl Locus {
    pub fn entity(kind: &str, id: impl Into<String>) -> Self {
        Locus::Entity {
            kind: kind.to_string(),
            id: id.into(),
        }
    }
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locus::Line { file, line } => write!(f, "{file}:{line}"),
            Locus::Entity { kind, id } => write!(f, "{kind} {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusDiagnostic {
    pub severity: Severity,
    pub locus: Locus,
    pub message: String,
}

impl CorpusDiagnostic {
    pub fn error(locus: Locus, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            locus,
            message: message.into(),
        }
    }

    pub fn warning(locus: Locus, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            locus,
            message: message.into(),
        }
    }
}

impl fmt::Display for CorpusDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.severity, self.locus, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("unknown dialogue `{0}`")]
    UnknownDialogue(String),
    #[error("dialogue `{dialogue_id}` has no transaction {index}")]
    UnknownTransaction { dialogue_id: String, index: u32 },
}

/// A move of a context slice with its tokens resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceMove {
    pub dialogue_move: DialogueMove,
    pub transaction_index: u32,
    /// `(unit_id, token)` in span order.
    pub tokens: Vec<(String, String)>,
}

impl SliceMove {
    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|(_, t)| t.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// All moves of transactions `0..=transaction_index`, in utterance order.
pub fn context_slice(
    corpus: &Corpus,
    dialogue_id: &str,
    transaction_index: u32,
) -> Result<Vec<SliceMove>, ContextError> {
    let dialogue = corpus
        .dialogue(dialogue_id)
        .ok_or_else(|| ContextError::UnknownDialogue(dialogue_id.to_string()))?;
    if !dialogue
        .transactions
        .iter()
        .any(|t| t.transaction_index == transaction_index)
    {
        return Err(ContextError::UnknownTransaction {
            dialogue_id: dialogue_id.to_string(),
            index: transaction_index,
        });
    }
    let units = dialogue.unit_map();
    let moves: HashMap<&str, &DialogueMove> = dialogue
        .moves
        .iter()
        .map(|m| (m.move_id.as_str(), m))
        .collect();
    let mut slice: Vec<SliceMove> = dialogue
        .transactions
        .iter()
        .filter(|t| t.transaction_index <= transaction_index)
        .flat_map(|t| {
            let (units, moves) = (&units, &moves);
            t.move_ids.iter().filter_map(move |id| {
                moves.get(id.as_str()).map(|mv| SliceMove {
                    dialogue_move: (*mv).clone(),
                    transaction_index: t.transaction_index,
                    tokens: mv
                        .unit_span
                        .iter()
                        .filter_map(|u| units.get(u.as_str()))
                        .map(|u| (u.unit_id.clone(), u.token.clone()))
                        .collect(),
                })
            })
        })
        .collect();
    slice.sort_by_key(|m| m.dialogue_move.utterance_index);
    Ok(slice)
}


#[cfg(test)]
mod tests {
    use super::test_support::small_corpus;
    use super::*;

    fn move_ids(slice: &[SliceMove]) -> Vec<&str> {
        slice.iter().map(|m| m.dialogue_move.move_id.as_str()).collect()
    }

    #[test]
    fn slice_prefixes() {
        let corpus = small_corpus();
        let first = context_slice(&corpus, "d1", 0).unwrap();
        assert_eq!(move_ids(&first), ["m1", "m2"]);
        assert_eq!(first[0].text(), "go to the parked van");

        let middle = context_slice(&corpus, "d1", 1).unwrap();
        assert_eq!(move_ids(&middle), ["m1", "m2", "m3", "m4"]);

        let last = context_slice(&corpus, "d1", 2).unwrap();
        assert_eq!(last.len(), corpus.dialogue("d1").unwrap().moves.len());

        for k in 0..2 {
            let a = context_slice(&corpus, "d1", k).unwrap();
            let b = context_slice(&corpus, "d1", k + 1).unwrap();
            assert_eq!(a[..], b[..a.len()]);
        }
    }

    #[test]
    fn slice_errors() {
        let corpus = small_corpus();
        assert_eq!(
            context_slice(&corpus, "nope", 0),
            Err(ContextError::UnknownDialogue("nope".into()))
        );
        assert!(matches!(
            context_slice(&corpus, "d1", 3),
            Err(ContextError::UnknownTransaction { index: 3, .. })
        ));
    }

    #[test]
    fn dialogue_lookups() {
        let corpus = small_corpus();
        let d = corpus.dialogue("d1").unwrap();
        let re2 = d.re("re2").unwrap();
        assert_eq!(d.utterance_of_re(re2), Some(3));
        assert_eq!(d.transaction_of_unit("u12"), Some(2));
        assert_eq!(corpus.re_map().len(), 3);
        assert_eq!(corpus.find_re("re3").unwrap().1.role, SpeakerRole::Follower);
    }
}
