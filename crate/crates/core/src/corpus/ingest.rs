use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    validate_corpus, Corpus, CorpusDiagnostic, Dialogue, DialogueMove, DialogueRecord, Locus,
    MapLandmarkInstance, ReferenceExpressionSpan, TimedUnit, Transaction,
};
use crate::diagnostics::Severity;
use crate::landmark::MtlmKey;
use crate::SpeakerRole;

/// Canonical interchange file names, in load order.
pub const INTERCHANGE_FILES: [&str; 6] = [
    "dialogues.jsonl",
    "units.jsonl",
    "moves.jsonl",
    "transactions.jsonl",
    "res.jsonl",
    "landmarks.jsonl",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{file}:{line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error("corpus has {} error(s); first: {}", .0.iter().filter(|d| d.severity == Severity::Error).count(), .0.iter().find(|d| d.severity == Severity::Error).map(|d| d.to_string()).unwrap_or_default())]
    Invalid(Vec<CorpusDiagnostic>),
}

/// A record together with where it was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct Located<T> {
    pub file: String,
    pub line: usize,
    pub value: T,
}

impl<T> Located<T> {
    fn locus(&self) -> Locus {
        Locus::Line {
            file: self.file.clone(),
            line: self.line,
        }
    }
}

/// Row of `res.jsonl`. The transaction index may be omitted; it is then
/// derived from the RE's first unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReRecord {
    pub re_id: String,
    pub dialogue_id: String,
    pub role: SpeakerRole,
    pub unit_span: Vec<String>,
    pub surface_text: String,
    pub original_mtlm: MtlmKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transaction_index: Option<u32>,
}

/// Raw record streams produced by a corpus adapter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceRecords {
    pub dialogues: Vec<Located<DialogueRecord>>,
    pub units: Vec<Located<TimedUnit>>,
    pub moves: Vec<Located<DialogueMove>>,
    pub transactions: Vec<Located<Transaction>>,
    pub res: Vec<Located<ReRecord>>,
    pub landmarks: Vec<Located<MapLandmarkInstance>>,
}

/// Anything that can enumerate the six corpus record streams.
pub trait CorpusSource {
    fn describe(&self) -> String;
    fn records(&self) -> Result<SourceRecords, IngestError>;
}

/// Reads the canonical JSONL interchange files from one directory.
#[derive(Debug, Clone)]
pub struct JsonlDirSource {
    dir: PathBuf,
}

impl JsonlDirSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn read<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<Located<T>>, IngestError> {
        let path = self.dir.join(name);
        let file = File::open(&path).map_err(|e| IngestError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| IngestError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let value = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
                file: name.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            out.push(Located {
                file: name.to_string(),
                line: i + 1,
                value,
            });
        }
        Ok(out)
    }
}

impl CorpusSource for JsonlDirSource {
    fn describe(&self) -> String {
        format!("jsonl:{}", self.dir.display())
    }

    fn records(&self) -> Result<SourceRecords, IngestError> {
        Ok(SourceRecords {
            dialogues: self.read(INTERCHANGE_FILES[0])?,
            units: self.read(INTERCHANGE_FILES[1])?,
            moves: self.read(INTERCHANGE_FILES[2])?,
            transactions: self.read(INTERCHANGE_FILES[3])?,
            res: self.read(INTERCHANGE_FILES[4])?,
            landmarks: self.read(INTERCHANGE_FILES[5])?,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Treat warnings as errors.
    pub strict: bool,
    /// Overrides the source description recorded as provenance.
    pub provenance: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    /// Warnings only; errors abort ingestion.
    pub diagnostics: Vec<CorpusDiagnostic>,
}

fn entity_key(kind: &str, id: String) -> (String, String) {
    (kind.to_string(), id)
}

pub fn ingest_corpus(
    source: &dyn CorpusSource,
    options: &IngestOptions,
) -> Result<Ingested, IngestError> {
    let records = source.records()?;
    let mut errors = Vec::new();
    let mut loci: HashMap<(String, String), Locus> = HashMap::new();
    let mut remember = |kind: &str, id: String, locus: Locus| -> bool {
        use std::collections::hash_map::Entry;
        match loci.entry(entity_key(kind, id)) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(locus);
                true
            }
        }
    };

    let mut dialogues: BTreeMap<String, Dialogue> = BTreeMap::new();
    for row in &records.dialogues {
        let d = &row.value;
        if !remember("dialogue", d.dialogue_id.clone(), row.locus()) {
            errors.push(CorpusDiagnostic::error(
                row.locus(),
                format!("duplicate dialogue id `{}`", d.dialogue_id),
            ));
            continue;
        }
        dialogues.insert(
            d.dialogue_id.clone(),
            Dialogue {
                dialogue_id: d.dialogue_id.clone(),
                map_pair_id: d.map_pair_id.clone(),
                units: Vec::new(),
                moves: Vec::new(),
                transactions: Vec::new(),
                res: Vec::new(),
            },
        );
    }

    let mut map_pairs: BTreeMap<String, Vec<MapLandmarkInstance>> = BTreeMap::new();
    for row in &records.landmarks {
        let lm = &row.value;
        let id = format!("{}/{}@{}", lm.map_pair_id, lm.name, lm.side.tag());
        remember("landmark", id, row.locus());
        map_pairs.entry(lm.map_pair_id.clone()).or_default().push(lm.clone());
    }
    macro_rules! attach {
        ($rows:expr, $kind:literal, $id:expr, $field:ident) => {
            for row in &$rows {
                let v = &row.value;
                let Some(d) = dialogues.get_mut(&v.dialogue_id) else {
                    errors.push(CorpusDiagnostic::error(
                        row.locus(),
                        format!("unknown dialogue `{}`", v.dialogue_id),
                    ));
                    continue;
                };
                let id: String = $id(v);
                if !remember($kind, id.clone(), row.locus()) {
                    errors.push(CorpusDiagnostic::error(
                        row.locus(),
                        format!("duplicate {} `{}`", $kind, id),
                    ));
                    continue;
                }
                d.$field.push(v.clone());
            }
        };
    }
    attach!(records.units, "unit", |u: &TimedUnit| format!("{}/{}", u.dialogue_id, u.unit_id), units);
    attach!(records.moves, "move", |m: &DialogueMove| format!("{}/{}", m.dialogue_id, m.move_id), moves);
    attach!(
        records.transactions,
        "transaction",
        |t: &Transaction| format!("{}/{}", t.dialogue_id, t.transaction_index),
        transactions
    );

    let mut re_rows: BTreeMap<String, Vec<&ReRecord>> = BTreeMap::new();
    for row in &records.res {
        let r = &row.value;
        if !dialogues.contains_key(&r.dialogue_id) {
            errors.push(CorpusDiagnostic::error(
                row.locus(),
                format!("unknown dialogue `{}`", r.dialogue_id),
            ));
            continue;
        }
        if !remember("re", r.re_id.clone(), row.locus()) {
            errors.push(CorpusDiagnostic::error(row.locus(), format!("duplicate re `{}`", r.re_id)));
            continue;
        }
        re_rows.entry(r.dialogue_id.clone()).or_default().push(r);
    }

    if !errors.is_empty() {
        return Err(IngestError::Invalid(errors));
    }

    for d in dialogues.values_mut() {
        d.units
            .sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then_with(|| a.unit_id.cmp(&b.unit_id)));
        let pos: HashMap<&str, usize> = d
            .units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.unit_id.as_str(), i))
            .collect();
        let first_pos = |span: &[String]| {
            span.first()
                .and_then(|u| pos.get(u.as_str()))
                .copied()
                .unwrap_or(usize::MAX)
        };
        d.moves.sort_by(|a, b| {
            first_pos(&a.unit_span)
                .cmp(&first_pos(&b.unit_span))
                .then(a.utterance_index.cmp(&b.utterance_index))
                .then_with(|| a.move_id.cmp(&b.move_id))
        });
        d.transactions.sort_by_key(|t| t.transaction_index);

        let mut res: Vec<ReferenceExpressionSpan> = re_rows
            .remove(&d.dialogue_id)
            .unwrap_or_default()
            .into_iter()
            .map(|r| {
                let derived = r.unit_span.first().and_then(|u| d.transaction_of_unit(u));
                ReferenceExpressionSpan {
                    re_id: r.re_id.clone(),
                    dialogue_id: r.dialogue_id.clone(),
                    role: r.role,
                    unit_span: r.unit_span.clone(),
                    surface_text: r.surface_text.clone(),
                    original_mtlm: r.original_mtlm.clone(),
                    transaction_index: r.transaction_index.or(derived).unwrap_or(0),
                }
            })
            .collect();
        res.sort_by(|a, b| {
            first_pos(&a.unit_span)
                .cmp(&first_pos(&b.unit_span))
                .then_with(|| a.re_id.cmp(&b.re_id))
        });
        d.res = res;
    }

    let corpus = Corpus {
        dialogues,
        map_pairs,
        provenance: options.provenance.clone().unwrap_or_else(|| source.describe()),
    };

    let mut diagnostics: Vec<CorpusDiagnostic> = validate_corpus(&corpus)
        .into_iter()
        .map(|mut diag| {
            if let Locus::Entity { kind, id } = &diag.locus {
                if let Some(line) = loci.get(&(kind.clone(), id.clone())) {
                    diag.message = format!("{} {id}: {}", kind, diag.message);
                    diag.locus = line.clone();
                }
            }
            if options.strict {
                diag.severity = Severity::Error;
            }
            diag
        })
        .collect();
    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        return Err(IngestError::Invalid(diagnostics));
    }
    diagnostics.sort_by_key(|d| d.to_string());
    Ok(Ingested { corpus, diagnostics })
}

fn write_lines<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes a corpus as the six canonical interchange files.
pub fn write_interchange(corpus: &Corpus, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let ds = corpus.dialogues.values();
    write_lines(
        &dir.join(INTERCHANGE_FILES[0]),
        ds.clone().map(|d| DialogueRecord {
            dialogue_id: d.dialogue_id.clone(),
            map_pair_id: d.map_pair_id.clone(),
        }),
    )?;
    write_lines(&dir.join(INTERCHANGE_FILES[1]), ds.clone().flat_map(|d| &d.units))?;
    write_lines(&dir.join(INTERCHANGE_FILES[2]), ds.clone().flat_map(|d| &d.moves))?;
    write_lines(&dir.join(INTERCHANGE_FILES[3]), ds.clone().flat_map(|d| &d.transactions))?;
    write_lines(&dir.join(INTERCHANGE_FILES[4]), ds.flat_map(|d| &d.res))?;
    write_lines(&dir.join(INTERCHANGE_FILES[5]), corpus.map_pairs.values().flatten())?;
    Ok(())
}
