//! Per-transaction annotation prompts.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{emit_output_schema_with, ValidationOptions};
use crate::corpus::{context_slice, ContextError, Corpus, ReferenceExpressionSpan, SliceMove};
use crate::landmark::{landmark_candidates, MapPairIndex};

pub use config::{ConfigError, PromptConfig, RULE_STEPS};

/// Prompt sections in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSection {
    Background,
    TaskDescription,
    LandmarkIdExplanation,
    AnnotationRule,
    OutputFormat,
    TargetRefIds,
    ContextDialogue,
    ContextDialogueActs,
    LandmarkCandidates,
}

impl PromptSection {
    pub const ALL: [PromptSection; 9] = [
        PromptSection::Background,
        PromptSection::TaskDescription,
        PromptSection::LandmarkIdExplanation,
        PromptSection::AnnotationRule,
        PromptSection::OutputFormat,
        PromptSection::TargetRefIds,
        PromptSection::ContextDialogue,
        PromptSection::ContextDialogueActs,
        PromptSection::LandmarkCandidates,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PromptSection::Background => "background",
            PromptSection::TaskDescription => "task_description",
            PromptSection::LandmarkIdExplanation => "landmark_id_explanation",
            PromptSection::AnnotationRule => "annotation_rule",
            PromptSection::OutputFormat => "output_format",
            PromptSection::TargetRefIds => "target_ref_ids",
            PromptSection::ContextDialogue => "context_dialogue",
            PromptSection::ContextDialogueActs => "context_dialogue_acts",
            PromptSection::LandmarkCandidates => "landmark_candidates",
        }
    }
}

impl fmt::Display for PromptSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("reference expressions `{first}` and `{second}` overlap")]
    Overlap { first: String, second: String },
    #[error("dialogue `{dialogue_id}` uses map pair {expected} but the index is for {found}")]
    MapPairMismatch {
        dialogue_id: String,
        expected: String,
        found: String,
    },
    #[error("prompt for {dialogue_id} transaction {transaction_index} has {chars} characters; limit is {limit}")]
    TooLong {
        dialogue_id: String,
        transaction_index: u32,
        chars: usize,
        limit: usize,
    },
    #[error("prompt text: {0}")]
    Parse(String),
}

/// A rendered prompt. `rendered` is the concatenation of
/// `<tag>\n{body}\n</tag>\n` over `sections`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptDocument {
    pub dialogue_id: String,
    pub transaction_index: u32,
    pub target_re_ids: Vec<String>,
    pub sections: Vec<(PromptSection, String)>,
    pub rendered: String,
}

fn render_sections(sections: &[(PromptSection, String)]) -> String {
    let mut out = String::new();
    for (section, body) in sections {
        out.push_str(&format!("<{0}>\n{1}\n</{0}>\n", section.tag(), body));
    }
    out
}

impl PromptDocument {
    fn new(dialogue_id: &str, transaction_index: u32, sections: Vec<(PromptSection, String)>) -> Self {
        let target_re_ids = sections
            .iter()
            .find(|(s, _)| *s == PromptSection::TargetRefIds)
            .map(|(_, body)| body.lines().filter(|l| !l.is_empty()).map(String::from).collect())
            .unwrap_or_default();
        Self {
            dialogue_id: dialogue_id.to_string(),
            transaction_index,
            target_re_ids,
            rendered: render_sections(&sections),
            sections,
        }
    }

    pub fn section(&self, section: PromptSection) -> Option<&str> {
        self.sections
            .iter()
            .find(|(s, _)| *s == section)
            .map(|(_, body)| body.as_str())
    }

    pub fn file_name(&self) -> String {
        prompt_file_name(&self.dialogue_id, self.transaction_index)
    }

    /// Inverse of rendering.
    pub fn parse(dialogue_id: &str, transaction_index: u32, text: &str) -> Result<Self, PromptError> {
        let mut rest = text;
        let mut sections = Vec::new();
        for section in PromptSection::ALL {
            let open = format!("<{}>\n", section.tag());
            let close = format!("\n</{}>\n", section.tag());
            rest = rest
                .strip_prefix(&open)
                .ok_or_else(|| PromptError::Parse(format!("expected <{section}>")))?;
            let end = rest
                .find(&close)
                .ok_or_else(|| PromptError::Parse(format!("unterminated <{section}>")))?;
            sections.push((section, rest[..end].to_string()));
            rest = &rest[end + close.len()..];
        }
        if !rest.is_empty() {
            return Err(PromptError::Parse("trailing text after last section".into()));
        }
        Ok(Self::new(dialogue_id, transaction_index, sections))
    }
}

pub fn prompt_file_name(dialogue_id: &str, transaction_index: u32) -> String {
    format!("{dialogue_id}_{transaction_index}.prompt.txt")
}

/// Renders the slice one move per line as `<g|f>: tokens`, wrapping every RE
/// span in bracket markers. An RE cut off by the end of the slice is closed
/// after its last token present.
pub fn bracket_references(
    moves: &[SliceMove],
    res: &[&ReferenceExpressionSpan],
    config: &PromptConfig,
) -> Result<String, PromptError> {
    let mut position: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, (unit_id, _)) in moves.iter().flat_map(|m| &m.tokens).enumerate() {
        position.insert(unit_id.as_str(), i);
    }
    let mut spans: Vec<(usize, usize, &str)> = res
        .iter()
        .filter_map(|re| {
            let pos: Vec<usize> = re
                .unit_span
                .iter()
                .filter_map(|u| position.get(u.as_str()).copied())
                .collect();
            let (lo, hi) = (pos.iter().min()?, pos.iter().max()?);
            Some((*lo, *hi, re.re_id.as_str()))
        })
        .collect();
    spans.sort();
    for pair in spans.windows(2) {
        if pair[1].0 <= pair[0].1 {
            return Err(PromptError::Overlap {
                first: pair[0].2.to_string(),
                second: pair[1].2.to_string(),
            });
        }
    }
    let opens: BTreeMap<usize, &str> = spans.iter().map(|(lo, _, id)| (*lo, *id)).collect();
    let closes: BTreeMap<usize, ()> = spans.iter().map(|(_, hi, _)| (*hi, ())).collect();

    let mut lines = Vec::with_capacity(moves.len());
    let mut flat = 0;
    for mv in moves {
        let mut pieces: Vec<String> = Vec::new();
        for (_, token) in &mv.tokens {
            if let Some(id) = opens.get(&flat) {
                pieces.push(config.open_bracket(id));
            }
            pieces.push(token.clone());
            if closes.contains_key(&flat) {
                pieces.push(config.bracket_close.clone());
            }
            flat += 1;
        }
        lines.push(format!("{}: {}", mv.dialogue_move.role.tag(), pieces.join(" ")));
    }
    Ok(lines.join("\n"))
}

/// One `[<g|f> utt:<n> move:<type>] tokens` segment per move, space-joined.
pub fn render_dialogue_acts(moves: &[SliceMove]) -> String {
    moves
        .iter()
        .map(|m| {
            let mv = &m.dialogue_move;
            let head = format!("[{} utt:{} move:{}]", mv.role.tag(), mv.utterance_index, mv.move_type);
            let text = m.text();
            if text.is_empty() {
                head
            } else {
                format!("{head} {text}")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders prompts with a fixed config and output schema.
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    config: PromptConfig,
    schema: String,
}

impl PromptBuilder {
    pub fn new(config: PromptConfig, options: &ValidationOptions) -> Self {
        Self {
            config,
            schema: emit_output_schema_with(options),
        }
    }

    pub fn config(&self) -> &PromptConfig {
        &self.config
    }

    pub fn build(
        &self,
        corpus: &Corpus,
        dialogue_id: &str,
        transaction_index: u32,
        index: &MapPairIndex,
    ) -> Result<PromptDocument, PromptError> {
        let dialogue = corpus
            .dialogue(dialogue_id)
            .ok_or_else(|| ContextError::UnknownDialogue(dialogue_id.to_string()))?;
        if dialogue.map_pair_id != index.map_pair_id() {
            return Err(PromptError::MapPairMismatch {
                dialogue_id: dialogue_id.to_string(),
                expected: dialogue.map_pair_id.clone(),
                found: index.map_pair_id().to_string(),
            });
        }
        let slice = context_slice(corpus, dialogue_id, transaction_index)?;
        let in_context: Vec<&ReferenceExpressionSpan> = dialogue
            .res
            .iter()
            .filter(|r| r.transaction_index <= transaction_index)
            .collect();
        let targets: Vec<&str> = dialogue
            .res_in_transaction(transaction_index)
            .map(|r| r.re_id.as_str())
            .collect();
        let c = &self.config;
        let sections = vec![
            (PromptSection::Background, c.background.trim().to_string()),
            (PromptSection::TaskDescription, c.task_description.trim().to_string()),
            (PromptSection::LandmarkIdExplanation, c.landmark_id_explanation.trim().to_string()),
            (PromptSection::AnnotationRule, c.annotation_rule()),
            (
                PromptSection::OutputFormat,
                format!("{}\n{}", c.output_format.trim(), self.schema.trim_end()),
            ),
            (PromptSection::TargetRefIds, targets.join("\n")),
            (PromptSection::ContextDialogue, bracket_references(&slice, &in_context, c)?),
            (PromptSection::ContextDialogueActs, render_dialogue_acts(&slice)),
            (
                PromptSection::LandmarkCandidates,
                landmark_candidates(index).trim_end().to_string(),
            ),
        ];
        let doc = PromptDocument::new(dialogue_id, transaction_index, sections);
        let chars = doc.rendered.chars().count();
        if chars > c.max_chars {
            return Err(PromptError::TooLong {
                dialogue_id: dialogue_id.to_string(),
                transaction_index,
                chars,
                limit: c.max_chars,
            });
        }
        Ok(doc)
    }

    /// Prompts for every transaction that holds at least one RE, ordered by
    /// dialogue and transaction.
    pub fn build_all(
        &self,
        corpus: &Corpus,
        indices: &BTreeMap<String, MapPairIndex>,
    ) -> Result<Vec<PromptDocument>, PromptError> {
        let mut out = Vec::new();
        for dialogue in corpus.dialogues.values() {
            let index = indices.get(&dialogue.map_pair_id).ok_or_else(|| PromptError::MapPairMismatch {
                dialogue_id: dialogue.dialogue_id.clone(),
                expected: dialogue.map_pair_id.clone(),
                found: "none".into(),
            })?;
            for t in &dialogue.transactions {
                if dialogue.res_in_transaction(t.transaction_index).next().is_some() {
                    out.push(self.build(corpus, &dialogue.dialogue_id, t.transaction_index, index)?);
                }
            }
        }
        Ok(out)
    }
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self::new(PromptConfig::default(), &ValidationOptions::default())
    }
}

/// Builds one prompt with the default output schema.
pub fn build_prompt(
    corpus: &Corpus,
    dialogue_id: &str,
    transaction_index: u32,
    index: &MapPairIndex,
    config: &PromptConfig,
) -> Result<PromptDocument, PromptError> {
    PromptBuilder::new(config.clone(), &ValidationOptions::default()).build(corpus, dialogue_id, transaction_index, index)
}

/// One line of `manifest.jsonl` in the prompt directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptManifestEntry {
    pub file: String,
    pub dialogue_id: String,
    pub transaction_index: u32,
    pub target_re_ids: Vec<String>,
}

pub const PROMPT_MANIFEST: &str = "manifest.jsonl";

/// Writes one file per prompt plus the manifest.
pub fn write_prompts(docs: &[PromptDocument], dir: &Path) -> io::Result<Vec<PromptManifestEntry>> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(docs.len());
    let mut manifest = io::BufWriter::new(fs::File::create(dir.join(PROMPT_MANIFEST))?);
    for doc in docs {
        fs::write(dir.join(doc.file_name()), &doc.rendered)?;
        let entry = PromptManifestEntry {
            file: doc.file_name(),
            dialogue_id: doc.dialogue_id.clone(),
            transaction_index: doc.transaction_index,
            target_re_ids: doc.target_re_ids.clone(),
        };
        serde_json::to_writer(&mut manifest, &entry)?;
        manifest.write_all(b"\n")?;
        entries.push(entry);
    }
    manifest.flush()?;
    Ok(entries)
}

/// Reads prompts back through the manifest, in manifest order.
pub fn read_prompts(dir: &Path) -> io::Result<Vec<PromptDocument>> {
    let file = fs::File::open(dir.join(PROMPT_MANIFEST))?;
    let mut out = Vec::new();
    for line in io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: PromptManifestEntry =
            serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let text = fs::read_to_string(dir.join(&entry.file))?;
        let doc = PromptDocument::parse(&entry.dialogue_id, entry.transaction_index, &text)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", entry.file)))?;
        if doc.target_re_ids != entry.target_re_ids {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}: targets disagree with the manifest", entry.file),
            ));
        }
        out.push(doc);
    }
    Ok(out)
}
