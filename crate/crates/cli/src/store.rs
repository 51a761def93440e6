//! On-disk store layout.
//!
//! ```text
//! <root>/corpus/    interchange JSONL, registry.jsonl, landmark_ids.jsonl
//! <root>/prompts/   one file per transaction plus manifest.jsonl
//! <root>/runs/<id>/ records, missing, quarantine, diagnostics, manifest
//! <root>/gold/      gold.jsonl (append-only log, last write per re_id wins)
//! <root>/reports/<id>/
//! ```
//!
//! A run directory is assembled under a temporary name and renamed into
//! place once complete, so a visible run never changes afterwards.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use refground::annotation::{AnnotationRecord, ValidationOptions};
use refground::annotator::RunManifest;
use refground::corpus::{ingest_corpus, Corpus, IngestOptions, JsonlDirSource};
use refground::eval::GoldRecord;
use refground::landmark::{AssignedLandmark, DiscrepancyType, LexicalVariantRegistry, MapPairIndex};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const REGISTRY_FILE: &str = "registry.jsonl";
pub const LANDMARK_IDS_FILE: &str = "landmark_ids.jsonl";
pub const VALIDATION_FILE: &str = "validation.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const MISSING_FILE: &str = "missing.jsonl";
pub const QUARANTINE_FILE: &str = "quarantine.jsonl";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const GOLD_FILE: &str = "gold.jsonl";

/// One line of `landmark_ids.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkIdRow {
    pub map_pair_id: String,
    pub epsilon: f64,
    #[serde(flatten)]
    pub landmark: AssignedLandmark,
    pub discrepancy: DiscrepancyType,
}

/// One line of the gold log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLine {
    pub revision: u64,
    #[serde(flatten)]
    pub gold: GoldRecord,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).with_context(|| format!("cannot write {}", path.display()))
}

/// Last line per re_id wins; output is sorted by re_id.
pub fn read_gold_log(path: &Path) -> Result<BTreeMap<String, GoldLine>> {
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    for line in read_jsonl::<GoldLine>(path)? {
        out.insert(line.gold.record.re_id.clone(), line);
    }
    Ok(out)
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn prompts_dir(&self) -> PathBuf {
        self.root.join("prompts")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    pub fn gold_path(&self) -> PathBuf {
        self.root.join("gold").join(GOLD_FILE)
    }

    pub fn report_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("reports").join(run_id)
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let dir = self.corpus_dir();
        if !dir.join("dialogues.jsonl").exists() {
            bail!("no corpus in {}; run `ingest` first", dir.display());
        }
        let ingested = ingest_corpus(&JsonlDirSource::new(&dir), &IngestOptions::default())
            .map_err(|e| anyhow::anyhow!("stored corpus is unreadable: {e}"))?;
        Ok(ingested.corpus)
    }

    pub fn load_registry(&self) -> Result<LexicalVariantRegistry> {
        let path = self.corpus_dir().join(REGISTRY_FILE);
        if !path.exists() {
            return Ok(LexicalVariantRegistry::default());
        }
        let file = fs::File::open(&path)?;
        LexicalVariantRegistry::from_jsonl(BufReader::new(file)).with_context(|| format!("{}", path.display()))
    }

    /// Indices rebuilt from `landmark_ids.jsonl` and classified again.
    pub fn load_indices(&self, registry: &LexicalVariantRegistry) -> Result<BTreeMap<String, MapPairIndex>> {
        let path = self.corpus_dir().join(LANDMARK_IDS_FILE);
        if !path.exists() {
            bail!("no landmark ids in {}; run `assign-ids` first", path.display());
        }
        let mut groups: BTreeMap<String, (f64, Vec<AssignedLandmark>)> = BTreeMap::new();
        for row in read_jsonl::<LandmarkIdRow>(&path)? {
            groups.entry(row.map_pair_id).or_insert((row.epsilon, Vec::new())).1.push(row.landmark);
        }
        let mut out = BTreeMap::new();
        for (map, (eps, rows)) in groups {
            let mut index = MapPairIndex::from_assigned(map.clone(), eps, rows)?;
            index.classify_all(registry)?;
            out.insert(map, index);
        }
        Ok(out)
    }

    /// The validation settings prompts were built with; defaults when no
    /// prompts exist yet.
    pub fn load_validation(&self) -> Result<ValidationOptions> {
        let path = self.prompts_dir().join(VALIDATION_FILE);
        if !path.exists() {
            return Ok(ValidationOptions::default());
        }
        Ok(serde_json::from_str(&fs::read_to_string(&path)?)?)
    }

    /// Completed runs, oldest id first.
    pub fn runs(&self) -> Result<Vec<String>> {
        let dir = self.runs_dir();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !name.starts_with('.') && entry.path().join(MANIFEST_FILE).is_file() {
                out.push(name);
            }
        }
        out.sort();
        Ok(out)
    }

    /// `run_id` if given, else the most recent run by id.
    pub fn resolve_run(&self, run_id: Option<&str>) -> Result<String> {
        match run_id {
            Some(id) => {
                if !self.run_dir(id).join(MANIFEST_FILE).is_file() {
                    bail!("no completed run `{id}` in {}", self.runs_dir().display());
                }
                Ok(id.to_string())
            }
            None => self.runs()?.pop().context("no completed runs; run `annotate` first"),
        }
    }

    pub fn read_records(&self, run_id: &str) -> Result<Vec<AnnotationRecord>> {
        read_jsonl(&self.run_dir(run_id).join(RECORDS_FILE))
    }

    pub fn read_manifest(&self, run_id: &str) -> Result<RunManifest> {
        let path = self.run_dir(run_id).join(MANIFEST_FILE);
        Ok(serde_json::from_str(&fs::read_to_string(&path)?)?)
    }

    /// A fresh run id: UTC timestamp, suffixed when taken.
    pub fn new_run_id(&self) -> String {
        let base = chrono::Utc::now().format("run-%Y%m%dT%H%M%SZ").to_string();
        let mut id = base.clone();
        let mut n = 2;
        while self.run_dir(&id).exists() {
            id = format!("{base}-{n}");
            n += 1;
        }
        id
    }

    /// Creates the staging directory for `run_id`. Fails if the run exists.
    pub fn stage_run(&self, run_id: &str) -> Result<StagedRun> {
        if run_id.is_empty() || run_id.starts_with('.') || run_id.contains(['/', '\\']) {
            bail!("invalid run id `{run_id}`");
        }
        let final_dir = self.run_dir(run_id);
        if final_dir.exists() {
            bail!("run `{run_id}` already exists; runs are never overwritten");
        }
        let staging = self.runs_dir().join(format!(".{run_id}.staging"));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        Ok(StagedRun { staging, final_dir })
    }

    /// Appends one line to the gold log.
    pub fn append_gold(&self, line: &GoldLine) -> Result<()> {
        let path = self.gold_path();
        fs::create_dir_all(path.parent().expect("gold path has a parent"))?;
        let mut file = fs::OpenOptions::new().create(true).append(true).open(&path)?;
        let mut buf = serde_json::to_vec(line)?;
        buf.push(b'\n');
        file.write_all(&buf)?;
        file.sync_data()?;
        Ok(())
    }
}

pub struct StagedRun {
    staging: PathBuf,
    final_dir: PathBuf,
}

impl StagedRun {
    pub fn path(&self, file: &str) -> PathBuf {
        self.staging.join(file)
    }

    /// Moves the finished run into place.
    pub fn commit(self) -> Result<PathBuf> {
        fs::rename(&self.staging, &self.final_dir)?;
        Ok(self.final_dir)
    }
}
