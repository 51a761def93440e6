//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use refground::analysis::{analyze, derive_state, distribution, write_report, UnderstandingState, UnificationMode};
use refground::annotation::{validate_record, AnnotationRecord, ValidationOptions};
use refground::annotator::{
    config_digest, run_requests, AnnotationRequest, MissingReDiagnostic, MockPolicy, MockProvider, Provider,
    RequestStatus, RunManifest, RunOutput,
};
use refground::corpus::{ingest_corpus, validate_corpus, Corpus, IngestError, IngestOptions, JsonlDirSource};
use refground::diagnostics::Severity;
use refground::eval::{disagreements_csv, evaluate, GoldRecord, PositiveClass};
use refground::landmark::{assign_unified_ids, DiscrepancyType, Epsilon, LexicalVariantRegistry, MapPairIndex};
use refground::prompt::{read_prompts, write_prompts, PromptBuilder, PromptConfig, PROMPT_MANIFEST};
use serde::{Deserialize, Serialize};

use crate::remote::{ProviderConfig, RemoteProvider};
use crate::store::{
    read_jsonl, write_jsonl, GoldLine, LandmarkIdRow, Store, DIAGNOSTICS_FILE, LANDMARK_IDS_FILE, MANIFEST_FILE,
    MISSING_FILE, QUARANTINE_FILE, RECORDS_FILE, REGISTRY_FILE, RUN_CONFIG_FILE, VALIDATION_FILE,
};
use crate::{Cli, Command, MockPolicyArg, Outcome, ProviderArgs, ProviderKind};

pub fn execute(cli: Cli) -> Result<Outcome> {
    let store = Store::new(cli.store);
    match cli.command {
        Command::Ingest {
            from,
            registry,
            strict,
            provenance,
        } => ingest(&store, &from, registry.as_deref(), strict, provenance),
        Command::AssignIds {
            epsilon,
            epsilon_fraction,
        } => assign_ids(
            &store,
            epsilon.map_or(Epsilon::DiagonalFraction(epsilon_fraction), Epsilon::Absolute),
        ),
        Command::BuildPrompts {
            config,
            quantificational_speaker_id,
        } => build_prompts(
            &store,
            config.as_deref(),
            ValidationOptions {
                quantificational_speaker_id,
                ..ValidationOptions::default()
            },
        ),
        Command::Annotate(args) => annotate(&store, &args),
        Command::Repair { run, provider } => repair(&store, run.as_deref(), &provider),
        Command::Validate {
            corpus,
            run,
            records,
            gold,
        } => validate(&store, corpus.as_deref(), run.as_deref(), records.as_deref(), gold.as_deref()),
        Command::DeriveStates { run, mode } => derive_states(&store, run.as_deref(), mode),
        Command::Analyze { run, out } => analyze_run(&store, run.as_deref(), out),
        Command::Eval {
            run,
            gold,
            positive_class,
            out,
        } => eval(&store, run.as_deref(), &gold, positive_class.into(), out),
        Command::Serve {
            port,
            bind,
            run,
            static_dir,
        } => crate::server::serve_blocking(store, &bind, port, run.as_deref(), static_dir),
    }
}

fn outcome(failed: bool) -> Outcome {
    if failed {
        Outcome::Failed
    } else {
        Outcome::Success
    }
}

// ---- ingest / assign-ids / build-prompts ----

fn report_ingest(result: Result<refground::corpus::Ingested, IngestError>) -> Result<Option<Corpus>> {
    match result {
        Ok(ingested) => {
            for d in &ingested.diagnostics {
                eprintln!("{d}");
            }
            Ok(Some(ingested.corpus))
        }
        Err(IngestError::Invalid(diags)) => {
            for d in &diags {
                eprintln!("{d}");
            }
            Ok(None)
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(None)
        }
    }
}

fn ingest(store: &Store, from: &Path, registry: Option<&Path>, strict: bool, provenance: Option<String>) -> Result<Outcome> {
    let options = IngestOptions { strict, provenance };
    let Some(corpus) = report_ingest(ingest_corpus(&JsonlDirSource::new(from), &options))? else {
        return Ok(Outcome::Failed);
    };
    let registry_path = registry.map(Path::to_path_buf).or_else(|| {
        let p = from.join(REGISTRY_FILE);
        p.exists().then_some(p)
    });
    let registry = match &registry_path {
        Some(p) => {
            let file = fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
            LexicalVariantRegistry::from_jsonl(std::io::BufReader::new(file))
                .with_context(|| format!("{}", p.display()))?
        }
        None => LexicalVariantRegistry::default(),
    };
    let dir = store.corpus_dir();
    fs::create_dir_all(&dir)?;
    refground::corpus::write_interchange(&corpus, &dir)?;
    fs::write(dir.join(REGISTRY_FILE), registry.to_jsonl())?;
    // Ids from an earlier corpus would be stale.
    let ids = dir.join(LANDMARK_IDS_FILE);
    if ids.exists() {
        fs::remove_file(ids)?;
    }
    println!(
        "ingested {} dialogue(s), {} move(s), {} reference expression(s); {} registry pair(s)",
        corpus.dialogues.len(),
        corpus.move_count(),
        corpus.re_count(),
        registry.len()
    );
    Ok(Outcome::Success)
}

fn assign_ids(store: &Store, epsilon: Epsilon) -> Result<Outcome> {
    let corpus = store.load_corpus()?;
    let registry = store.load_registry()?;
    let mut rows = Vec::new();
    let mut failed = false;
    let mut counts: BTreeMap<DiscrepancyType, usize> = BTreeMap::new();
    for (map, landmarks) in &corpus.map_pairs {
        let eps = epsilon.resolve(landmarks);
        let mut index = match assign_unified_ids(landmarks, eps) {
            Ok(i) => i,
            Err(e) => {
                eprintln!("error: map pair {map}: {e}");
                failed = true;
                continue;
            }
        };
        match index.classify_all(&registry) {
            Ok(warnings) => {
                for w in warnings {
                    eprintln!("warning: map pair {map}: {}: {}", w.key, w.message);
                }
            }
            Err(e) => {
                eprintln!("error: map pair {map}: {e}");
                failed = true;
                continue;
            }
        }
        let canonical: BTreeMap<_, _> =
            index.discrepancies().iter().map(|(k, t)| (registry.canonical_name(k), *t)).collect();
        for t in canonical.values() {
            *counts.entry(*t).or_insert(0) += 1;
        }
        for lm in index.instances() {
            let discrepancy = index
                .discrepancy(&lm.umlm.mtlm_key())
                .expect("classify_all covers every key");
            rows.push(LandmarkIdRow {
                map_pair_id: map.clone(),
                epsilon: eps,
                landmark: lm.clone(),
                discrepancy,
            });
        }
    }
    if failed {
        return Ok(Outcome::Failed);
    }
    write_jsonl(&store.corpus_dir().join(LANDMARK_IDS_FILE), &rows)?;
    let summary: Vec<String> = counts.iter().map(|(t, n)| format!("{t} {n}")).collect();
    println!("assigned {} landmark id(s); landmark names by type: {}", rows.len(), summary.join(", "));
    Ok(Outcome::Success)
}

fn build_prompts(store: &Store, config: Option<&Path>, options: ValidationOptions) -> Result<Outcome> {
    let corpus = store.load_corpus()?;
    let registry = store.load_registry()?;
    let indices = store.load_indices(&registry)?;
    let config = match config {
        Some(p) => PromptConfig::from_toml(&fs::read_to_string(p)?).with_context(|| format!("{}", p.display()))?,
        None => PromptConfig::default(),
    };
    let docs = match PromptBuilder::new(config, &options).build_all(&corpus, &indices) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(Outcome::Failed);
        }
    };
    let dir = store.prompts_dir();
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    write_prompts(&docs, &dir)?;
    fs::write(dir.join(VALIDATION_FILE), serde_json::to_string_pretty(&options)? + "\n")?;
    println!("wrote {} prompt(s) to {}", docs.len(), dir.display());
    Ok(Outcome::Success)
}

// ---- annotate / repair ----

/// Settings of one run, stored beside its records and digested into the
/// manifest. Paths are relative to the store root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus_dir: String,
    pub registry_path: String,
    pub prompts_dir: String,
    pub output_dir: String,
    pub provider: String,
    pub mock_policy: Option<String>,
    pub provider_config: Option<String>,
    pub model: String,
    pub parallelism: usize,
    pub retry: refground::annotator::RetryPolicy,
    pub validation: ValidationOptions,
    /// Matching distance per map pair, as recorded with the landmark ids.
    pub epsilon: BTreeMap<String, f64>,
    pub repairs: Option<String>,
}

struct Loaded {
    corpus: Corpus,
    indices: BTreeMap<String, MapPairIndex>,
    requests: Vec<AnnotationRequest>,
    options: ValidationOptions,
}

fn load_for_run(store: &Store) -> Result<Loaded> {
    let corpus = store.load_corpus()?;
    let registry = store.load_registry()?;
    let indices = store.load_indices(&registry)?;
    let prompts_dir = store.prompts_dir();
    if !prompts_dir.join(PROMPT_MANIFEST).exists() {
        bail!("no prompts in {}; run `build-prompts` first", prompts_dir.display());
    }
    let requests = read_prompts(&prompts_dir)?.into_iter().map(AnnotationRequest::from_prompt).collect();
    Ok(Loaded {
        corpus,
        indices,
        requests,
        options: store.load_validation()?,
    })
}

fn provider_config(args: &ProviderArgs) -> Result<ProviderConfig> {
    let mut config = match &args.provider_config {
        Some(p) => ProviderConfig::from_toml(&fs::read_to_string(p)?).with_context(|| format!("{}", p.display()))?,
        None => ProviderConfig::default(),
    };
    if let Some(n) = args.parallelism {
        config.parallelism = n;
    }
    Ok(config)
}

fn mock_policy(args: &ProviderArgs) -> Result<MockPolicy> {
    Ok(match args.mock_policy {
        MockPolicyArg::EchoSpeaker => MockPolicy::EchoSpeaker,
        MockPolicyArg::NearestInstance => MockPolicy::NearestInstance,
        MockPolicyArg::Scripted => {
            let path = args.script.as_ref().context("--mock-policy scripted needs --script FILE")?;
            let records: Vec<AnnotationRecord> = read_jsonl(path)?;
            MockPolicy::Scripted(records.into_iter().map(|r| (r.re_id.clone(), r)).collect())
        }
    })
}

fn relative(store: &Store, path: &Path) -> String {
    path.strip_prefix(store.root()).unwrap_or(path).display().to_string()
}

/// Runs `requests` and writes a complete new run directory.
fn execute_run(
    store: &Store,
    loaded: &Loaded,
    requests: &[AnnotationRequest],
    args: &ProviderArgs,
    repairs: Option<(&str, Vec<AnnotationRecord>)>,
) -> Result<(String, RunOutput)> {
    let config = provider_config(args)?;
    let run_id = args.run_id.clone().unwrap_or_else(|| store.new_run_id());
    let staged = store.stage_run(&run_id)?;
    let policy;
    let remote;
    let mock;
    let provider: &dyn Provider = match args.provider {
        ProviderKind::Mock => {
            policy = mock_policy(args)?;
            mock = MockProvider::new(&loaded.corpus, &loaded.indices, policy.clone());
            &mock
        }
        ProviderKind::Remote => {
            remote = RemoteProvider::from_env(&config, &loaded.options)?;
            &remote
        }
    };
    let run_config = RunConfig {
        corpus_dir: relative(store, &store.corpus_dir()),
        registry_path: relative(store, &store.corpus_dir().join(REGISTRY_FILE)),
        prompts_dir: relative(store, &store.prompts_dir()),
        output_dir: relative(store, &store.run_dir(&run_id)),
        provider: provider.name().to_string(),
        mock_policy: (args.provider == ProviderKind::Mock).then(|| provider.model().to_string()),
        provider_config: args.provider_config.as_ref().map(|p| p.display().to_string()),
        model: provider.model().to_string(),
        parallelism: config.parallelism,
        retry: config.retry.clone(),
        validation: loaded.options,
        epsilon: loaded.indices.iter().map(|(k, i)| (k.clone(), i.epsilon())).collect(),
        repairs: repairs.as_ref().map(|(id, _)| id.to_string()),
    };
    let started_at = chrono::Utc::now().to_rfc3339();
    let out = run_requests(
        &run_id,
        provider,
        requests,
        &loaded.corpus,
        &loaded.indices,
        &config.retry,
        config.parallelism,
        &loaded.options,
    );
    let finished_at = chrono::Utc::now().to_rfc3339();

    let mut records = out.records.clone();
    if let Some((_, prior)) = &repairs {
        // Keep the original request and target order.
        let order: HashMap<&str, usize> = loaded
            .requests
            .iter()
            .flat_map(|r| r.target_re_ids.iter())
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        records.extend(prior.iter().cloned());
        records.sort_by_key(|r| order.get(r.re_id.as_str()).copied().unwrap_or(usize::MAX));
    }

    let run_config_json = serde_json::to_string_pretty(&run_config)? + "\n";
    let mut digest_parts = vec![run_config_json.clone()];
    digest_parts.push(fs::read_to_string(store.prompts_dir().join(PROMPT_MANIFEST))?);
    digest_parts.extend(requests.iter().map(|r| r.prompt.rendered.clone()));
    digest_parts.push(fs::read_to_string(store.corpus_dir().join(LANDMARK_IDS_FILE))?);
    digest_parts.push(store.load_registry()?.to_jsonl());
    let manifest = RunManifest {
        run_id: run_id.clone(),
        provider: provider.name().to_string(),
        model: provider.model().to_string(),
        parameters: provider.parameters(),
        config_digest: config_digest(&digest_parts),
        started_at,
        finished_at,
        repairs: repairs.as_ref().map(|(id, _)| id.to_string()),
        requests: out.requests.clone(),
    };
    write_jsonl(&staged.path(RECORDS_FILE), &records)?;
    write_jsonl(&staged.path(MISSING_FILE), &out.missing)?;
    write_jsonl(&staged.path(QUARANTINE_FILE), &out.quarantined)?;
    write_jsonl(&staged.path(DIAGNOSTICS_FILE), &out.diagnostics)?;
    fs::write(staged.path(RUN_CONFIG_FILE), run_config_json)?;
    fs::write(staged.path(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    staged.commit()?;

    let counts: Vec<String> = manifest.status_counts().iter().map(|(s, n)| format!("{s} {n}")).collect();
    println!(
        "run {run_id}: {} record(s), {} missing, {} quarantined; requests: {}",
        records.len(),
        out.missing.len(),
        out.quarantined.len(),
        counts.join(", ")
    );
    Ok((run_id, RunOutput { records, ..out }))
}

fn run_outcome(out: &RunOutput) -> Outcome {
    if out.requests.iter().all(|r| r.status == RequestStatus::Ok) {
        Outcome::Success
    } else {
        eprintln!("some requests did not complete cleanly; see missing.jsonl and diagnostics.jsonl, then run `repair`");
        Outcome::Failed
    }
}

fn annotate(store: &Store, args: &ProviderArgs) -> Result<Outcome> {
    let loaded = load_for_run(store)?;
    let (_, out) = execute_run(store, &loaded, &loaded.requests, args, None)?;
    Ok(run_outcome(&out))
}

fn repair(store: &Store, run: Option<&str>, args: &ProviderArgs) -> Result<Outcome> {
    let source = store.resolve_run(run)?;
    let missing: Vec<MissingReDiagnostic> = read_jsonl(&store.run_dir(&source).join(MISSING_FILE))?;
    if missing.is_empty() {
        println!("run {source} has no missing reference expressions");
        return Ok(Outcome::Success);
    }
    let loaded = load_for_run(store)?;
    let mut wanted: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for m in &missing {
        wanted.entry(m.request_id.as_str()).or_default().push(m.re_id.clone());
    }
    let requests: Vec<AnnotationRequest> = loaded
        .requests
        .iter()
        .filter_map(|r| wanted.get(r.request_id.as_str()).map(|ids| r.narrowed(ids)))
        .filter(|r| !r.target_re_ids.is_empty())
        .collect();
    let prior = store.read_records(&source)?;
    let (_, out) = execute_run(store, &loaded, &requests, args, Some((&source, prior)))?;
    Ok(run_outcome(&out))
}

// ---- validate ----

/// One finding about a record, as printed and as returned by the API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub re_id: String,
    pub rule_id: String,
    pub severity: Severity,
    pub message: String,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} [{}] {}: {}", self.severity, self.rule_id, self.re_id, self.message)
    }
}

/// The checks every stored record passes: the RE exists, the speaker
/// matches its role, and annotation validation against its map pair.
pub fn check_record(
    record: &AnnotationRecord,
    corpus: &Corpus,
    indices: &BTreeMap<String, MapPairIndex>,
    options: &ValidationOptions,
) -> Vec<Finding> {
    let error = |rule: &str, message: String| Finding {
        re_id: record.re_id.clone(),
        rule_id: rule.into(),
        severity: Severity::Error,
        message,
    };
    let Some((dialogue, re)) = corpus.re_map().get(record.re_id.as_str()).copied() else {
        return vec![error("unknown_re", "no reference expression with this id in the corpus".into())];
    };
    let Some(index) = indices.get(&dialogue.map_pair_id) else {
        return vec![error("unknown_map_pair", format!("no landmark ids for map pair {}", dialogue.map_pair_id))];
    };
    let mut out = Vec::new();
    if record.speaker != re.role {
        out.push(error(
            "speaker_role",
            format!("speaker is {} but the expression is spoken by the {}", record.speaker, re.role),
        ));
    }
    out.extend(validate_record(record, index, options).into_iter().map(|d| Finding {
        re_id: d.re_id,
        rule_id: d.rule_id.as_str().into(),
        severity: d.severity,
        message: d.message,
    }));
    out
}

/// Gold from a plain JSONL file or the store's log; the last line per
/// re_id wins. Sorted by re_id.
pub fn read_gold_file(path: &Path) -> Result<Vec<GoldRecord>> {
    let mut by_id = BTreeMap::new();
    for g in read_jsonl::<GoldRecord>(path)? {
        by_id.insert(g.record.re_id.clone(), g);
    }
    Ok(by_id.into_values().collect())
}

fn print_findings(findings: &[Finding]) -> bool {
    for f in findings {
        eprintln!("{f}");
    }
    findings.iter().any(|f| f.severity == Severity::Error)
}

fn validate(
    store: &Store,
    corpus_dir: Option<&Path>,
    run: Option<&str>,
    records: Option<&Path>,
    gold: Option<&Path>,
) -> Result<Outcome> {
    let corpus = match corpus_dir {
        Some(dir) => match report_ingest(ingest_corpus(&JsonlDirSource::new(dir), &IngestOptions::default()))? {
            Some(c) => c,
            None => return Ok(Outcome::Failed),
        },
        None => {
            let c = store.load_corpus()?;
            let diags = validate_corpus(&c);
            for d in &diags {
                eprintln!("{d}");
            }
            if diags.iter().any(|d| d.severity == Severity::Error) {
                return Ok(Outcome::Failed);
            }
            c
        }
    };
    let mut sets: Vec<(String, Vec<AnnotationRecord>)> = Vec::new();
    if let Some(run) = run {
        let id = store.resolve_run(Some(run))?;
        sets.push((format!("run {id}"), store.read_records(&id)?));
    }
    if let Some(p) = records {
        sets.push((p.display().to_string(), read_jsonl(p)?));
    }
    if let Some(p) = gold {
        sets.push((p.display().to_string(), read_gold_file(p)?.into_iter().map(|g| g.record).collect()));
    }
    let mut failed = false;
    if !sets.is_empty() {
        let registry = store.load_registry()?;
        let indices = store.load_indices(&registry)?;
        let options = store.load_validation()?;
        for (label, records) in sets {
            let mut findings = Vec::new();
            let mut seen = BTreeSet::new();
            for r in &records {
                if !seen.insert(r.re_id.clone()) {
                    findings.push(Finding {
                        re_id: r.re_id.clone(),
                        rule_id: "duplicate_re".into(),
                        severity: Severity::Error,
                        message: "more than one record for this re_id".into(),
                    });
                }
                findings.extend(check_record(r, &corpus, &indices, &options));
            }
            let bad = print_findings(&findings);
            failed |= bad;
            println!("{label}: {} record(s), {} finding(s)", records.len(), findings.len());
        }
    }
    println!(
        "corpus: {} dialogue(s), {} reference expression(s){}",
        corpus.dialogues.len(),
        corpus.re_count(),
        if failed { "; errors found" } else { "; ok" }
    );
    Ok(outcome(failed))
}

// ---- derive-states / analyze / eval ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateLine {
    pub re_id: String,
    #[serde(flatten)]
    pub state: UnderstandingState,
}

fn derive_states(store: &Store, run: Option<&str>, mode: UnificationMode) -> Result<Outcome> {
    let run_id = store.resolve_run(run)?;
    let records = store.read_records(&run_id)?;
    let registry = store.load_registry()?;
    let mut lines = Vec::with_capacity(records.len());
    for r in &records {
        match derive_state(r, &registry, mode) {
            Ok(state) => lines.push(StateLine {
                re_id: r.re_id.clone(),
                state,
            }),
            Err(e) => {
                eprintln!("error: {e}");
                return Ok(Outcome::Failed);
            }
        }
    }
    let dir = store.report_dir(&run_id);
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("states_{mode}.jsonl"));
    write_jsonl(&path, &lines)?;
    let d = distribution(&records, &registry, mode)?;
    println!(
        "{mode}: aligned {} ({:.1}%), pending {} ({:.1}%), misunderstood {} ({:.2}%); wrote {}",
        d.aligned,
        d.percent(d.aligned),
        d.pending,
        d.percent(d.pending),
        d.misunderstood,
        d.percent(d.misunderstood),
        path.display()
    );
    Ok(Outcome::Success)
}

fn analyze_run(store: &Store, run: Option<&str>, out: Option<PathBuf>) -> Result<Outcome> {
    let run_id = store.resolve_run(run)?;
    let records = store.read_records(&run_id)?;
    let corpus = store.load_corpus()?;
    let registry = store.load_registry()?;
    let indices = store.load_indices(&registry)?;
    let report = match analyze(&records, &corpus, &indices, &registry) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(Outcome::Failed);
        }
    };
    let dir = out.unwrap_or_else(|| store.report_dir(&run_id));
    write_report(&report, &dir)?;
    let s = &report.summary;
    println!(
        "analyzed {} record(s): {} chain(s), {} grounded, {} never aligned; report in {}",
        s.records,
        s.chain_totals.chains,
        s.chain_totals.grounded,
        s.chain_totals.never_aligned,
        dir.display()
    );
    let c = &s.consistency;
    let consistent = c.pending_identical && c.alignment_identity && c.unification_monotone && c.by_type_total_matches;
    if !consistent {
        eprintln!("error: internal consistency checks failed: {c:?}");
    }
    Ok(outcome(!consistent))
}

fn eval(store: &Store, run: Option<&str>, gold: &Path, positive: PositiveClass, out: Option<PathBuf>) -> Result<Outcome> {
    let run_id = store.resolve_run(run)?;
    let corpus = store.load_corpus()?;
    let registry = store.load_registry()?;
    let indices = store.load_indices(&registry)?;
    let options = store.load_validation()?;
    let gold: Vec<AnnotationRecord> = read_gold_file(gold)?.into_iter().map(|g| g.record).collect();
    let findings: Vec<Finding> = gold.iter().flat_map(|g| check_record(g, &corpus, &indices, &options)).collect();
    if print_findings(&findings) {
        eprintln!("error: gold records fail validation");
        return Ok(Outcome::Failed);
    }
    // Gold may cover a subset of the run.
    let wanted: BTreeSet<&str> = gold.iter().map(|g| g.re_id.as_str()).collect();
    let machine: Vec<AnnotationRecord> =
        store.read_records(&run_id)?.into_iter().filter(|r| wanted.contains(r.re_id.as_str())).collect();
    let report = match evaluate(&machine, &gold, &registry, positive) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(Outcome::Failed);
        }
    };
    let dir = out.unwrap_or_else(|| store.report_dir(&run_id));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("eval_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(dir.join("disagreements.csv"), disagreements_csv(&machine, &gold)?)?;
    println!("{:<20} {:>5} {:>9} {:>6} {:>6}", "attribute", "N", "accuracy", "F1", "errors");
    for m in &report.attributes {
        println!(
            "{:<20} {:>5} {:>8.2}% {:>6.3} {:>6}",
            m.attribute.as_str(),
            m.n,
            100.0 * m.accuracy,
            m.f1,
            m.error_count
        );
    }
    let rl = &report.re_level;
    println!(
        "RE-level: {}/{} with >=1 error, {} attribute error(s)",
        rl.res_with_error, rl.total_res, rl.total_attribute_errors
    );
    let g = &report.grounded_id;
    println!(
        "grounded ids (N={}): accuracy {:.1}%, element micro-F1 {:.1}%, set-label micro-F1 {:.1}%",
        g.n,
        100.0 * g.accuracy,
        100.0 * g.element_micro.f1,
        100.0 * g.set_label_micro.f1
    );
    Ok(Outcome::Success)
}

/// Appends a validated gold record; used by the API. `GoldLine` revisions
/// count the writes for one re_id.
pub fn next_gold_line(current: Option<&GoldLine>, gold: GoldRecord) -> GoldLine {
    GoldLine {
        revision: current.map_or(1, |c| c.revision + 1),
        gold,
    }
}
