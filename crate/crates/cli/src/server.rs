//! HTTP API for the review UI.
//!
//! Reads are served from an immutable snapshot of the store. Gold writes go
//! through one mutex, so each re_id's revision increases by exactly one per
//! accepted write and the log never interleaves partial lines.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use refground::annotation::{AnnotationRecord, RecordSchema, ValidationOptions};
use refground::corpus::{Corpus, ReferenceExpressionSpan};
use refground::eval::{field_diff, GoldRecord};
use refground::landmark::{LexicalVariantRegistry, MapPairIndex};
use refground::prompt::{prompt_file_name, PromptBuilder, PromptDocument, PromptSection};
use refground::SpeakerRole;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::commands::{check_record, next_gold_line, Finding};
use crate::store::{read_gold_log, GoldLine, Store};
use crate::Outcome;

pub struct AppState {
    store: Store,
    corpus: Corpus,
    indices: BTreeMap<String, MapPairIndex>,
    options: ValidationOptions,
    schema: RecordSchema,
    run_id: Option<String>,
    machine: HashMap<String, AnnotationRecord>,
    gold: Mutex<BTreeMap<String, GoldLine>>,
}

impl AppState {
    /// Loads the stored corpus, landmark ids, gold log and the records of
    /// `run` (or the latest run, if any).
    pub fn load(store: Store, run: Option<&str>) -> Result<Self> {
        let corpus = store.load_corpus()?;
        let registry: LexicalVariantRegistry = store.load_registry()?;
        let indices = store.load_indices(&registry)?;
        let options = store.load_validation()?;
        let run_id = match run {
            Some(r) => Some(store.resolve_run(Some(r))?),
            None => store.runs()?.pop(),
        };
        let machine = match &run_id {
            Some(id) => store.read_records(id)?.into_iter().map(|r| (r.re_id.clone(), r)).collect(),
            None => HashMap::new(),
        };
        let gold = Mutex::new(read_gold_log(&store.gold_path())?);
        Ok(Self {
            store,
            corpus,
            indices,
            schema: RecordSchema::new(&options),
            options,
            run_id,
            machine,
            gold,
        })
    }

    fn re(&self, re_id: &str) -> Result<(&refground::corpus::Dialogue, &ReferenceExpressionSpan), ApiError> {
        self.corpus
            .find_re(re_id)
            .ok_or_else(|| ApiError::not_found(format!("unknown reference expression `{re_id}`")))
    }

    fn gold_of(&self, re_id: &str) -> Option<GoldLine> {
        self.gold.lock().expect("gold lock").get(re_id).cloned()
    }
}

pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn invalid(diagnostics: Vec<Finding>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": "gold record failed validation", "diagnostics": diagnostics }),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/dialogues", get(dialogues))
        .route("/api/dialogues/{id}/transactions/{k}", get(transaction))
        .route("/api/res/{re_id}", get(reference))
        .route("/api/gold/{re_id}", get(get_gold).put(put_gold))
        .route("/api/diff/{re_id}", get(diff))
        .route("/api/progress", get(progress))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

async fn dialogues(State(s): State<Arc<AppState>>) -> ApiResult {
    let gold = s.gold.lock().expect("gold lock");
    let rows: Vec<Value> = s
        .corpus
        .dialogues
        .values()
        .map(|d| {
            json!({
                "dialogue_id": d.dialogue_id,
                "map_pair_id": d.map_pair_id,
                "transactions": d.transactions.iter().map(|t| json!({
                    "transaction_index": t.transaction_index,
                    "re_ids": d.res_in_transaction(t.transaction_index).map(|r| &r.re_id).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
                "res": d.res.len(),
                "gold": d.res.iter().filter(|r| gold.contains_key(&r.re_id)).count(),
            })
        })
        .collect();
    Ok(Json(json!({ "run_id": s.run_id, "dialogues": rows })))
}

fn prompt_for(s: &AppState, dialogue_id: &str, k: u32) -> Result<PromptDocument, ApiError> {
    let dialogue = s
        .corpus
        .dialogue(dialogue_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown dialogue `{dialogue_id}`")))?;
    if !dialogue.transactions.iter().any(|t| t.transaction_index == k) {
        return Err(ApiError::not_found(format!("dialogue `{dialogue_id}` has no transaction {k}")));
    }
    // Prefer the prompt the run saw; transactions without REs have none.
    let path = s.store.prompts_dir().join(prompt_file_name(dialogue_id, k));
    if let Ok(text) = std::fs::read_to_string(&path) {
        return PromptDocument::parse(dialogue_id, k, &text).map_err(ApiError::internal);
    }
    let index = s
        .indices
        .get(&dialogue.map_pair_id)
        .ok_or_else(|| ApiError::internal(format!("no landmark ids for {}", dialogue.map_pair_id)))?;
    PromptBuilder::new(Default::default(), &s.options)
        .build(&s.corpus, dialogue_id, k, index)
        .map_err(ApiError::internal)
}

async fn transaction(State(s): State<Arc<AppState>>, Path((id, k)): Path<(String, String)>) -> ApiResult {
    let k: u32 = k
        .parse()
        .map_err(|_| ApiError::not_found(format!("transaction index `{k}` is not a number")))?;
    let doc = prompt_for(&s, &id, k)?;
    let section = |sec| doc.section(sec).unwrap_or_default();
    Ok(Json(json!({
        "dialogue_id": id,
        "transaction_index": k,
        "target_re_ids": doc.target_re_ids,
        "context_dialogue": section(PromptSection::ContextDialogue),
        "context_dialogue_acts": section(PromptSection::ContextDialogueActs),
    })))
}

async fn reference(State(s): State<Arc<AppState>>, Path(re_id): Path<String>) -> ApiResult {
    let (dialogue, re) = s.re(&re_id)?;
    let index = s.indices.get(&dialogue.map_pair_id);
    let candidates: BTreeMap<&str, Vec<Value>> = SpeakerRole::ALL
        .iter()
        .map(|side| {
            let rows = index
                .map(|i| {
                    i.instances()
                        .iter()
                        .filter(|a| a.umlm.side == *side)
                        .map(|a| {
                            json!({
                                "id": a.umlm,
                                "name": a.umlm.name,
                                "x": a.x,
                                "y": a.y,
                                "shared": a.shared,
                                "discrepancy": i.discrepancy(&a.umlm.mtlm_key()),
                            })
                        })
                        .collect()
                })
                .unwrap_or_default();
            (side.as_str(), rows)
        })
        .collect();
    let gold = s.gold_of(&re_id);
    Ok(Json(json!({
        "re": re,
        "map_pair_id": dialogue.map_pair_id,
        "utterance_index": dialogue.utterance_of_re(re),
        "machine": s.machine.get(&re_id),
        "gold": gold,
        "candidates": candidates,
    })))
}

async fn get_gold(State(s): State<Arc<AppState>>, Path(re_id): Path<String>) -> ApiResult {
    s.re(&re_id)?;
    let line = s
        .gold_of(&re_id)
        .ok_or_else(|| ApiError::not_found(format!("no gold record for `{re_id}`")))?;
    Ok(Json(json!(line)))
}

#[derive(Deserialize)]
struct GoldSubmission {
    #[serde(flatten)]
    gold: GoldRecord,
    #[serde(default)]
    base_revision: Option<u64>,
}

fn finding(re_id: &str, rule: &str, message: String) -> Finding {
    Finding {
        re_id: re_id.into(),
        rule_id: rule.into(),
        severity: refground::diagnostics::Severity::Error,
        message,
    }
}

/// Revision rule: a first write sends no `base_revision` (or 0); every later
/// write must name the revision it edited.
async fn put_gold(State(s): State<Arc<AppState>>, Path(re_id): Path<String>, Json(body): Json<Value>) -> ApiResult {
    s.re(&re_id)?;
    let submission: GoldSubmission = match serde_json::from_value(body.clone()) {
        Ok(g) => g,
        Err(e) => {
            let mut record = body.clone();
            if let Some(obj) = record.as_object_mut() {
                for extra in ["annotator_id", "note", "base_revision", "revision"] {
                    obj.remove(extra);
                }
            }
            let mut findings: Vec<Finding> = s
                .schema
                .item_errors(&record)
                .into_iter()
                .map(|m| finding(&re_id, "schema", m))
                .collect();
            if findings.is_empty() {
                findings.push(finding(&re_id, "schema", e.to_string()));
            }
            return Err(ApiError::invalid(findings));
        }
    };
    let gold = submission.gold;
    let mut findings = Vec::new();
    if gold.record.re_id != re_id {
        findings.push(finding(
            &re_id,
            "re_id_mismatch",
            format!("body re_id `{}` differs from the path", gold.record.re_id),
        ));
    }
    if gold.annotator_id.trim().is_empty() {
        findings.push(finding(&re_id, "annotator_id", "annotator_id must not be empty".into()));
    }
    findings.extend(check_record(&gold.record, &s.corpus, &s.indices, &s.options));
    if findings.iter().any(|f| f.severity == refground::diagnostics::Severity::Error) {
        return Err(ApiError::invalid(findings));
    }

    let mut log = s.gold.lock().expect("gold lock");
    let current = log.get(&re_id);
    let current_revision = current.map_or(0, |c| c.revision);
    if submission.base_revision.unwrap_or(0) != current_revision {
        return Err(ApiError {
            status: StatusCode::CONFLICT,
            body: json!({
                "error": "gold record changed since it was read",
                "current_revision": current_revision,
                "current": current,
            }),
        });
    }
    let line = next_gold_line(current, gold);
    s.store.append_gold(&line).map_err(ApiError::internal)?;
    log.insert(re_id.clone(), line.clone());
    Ok(Json(json!({
        "re_id": re_id,
        "revision": line.revision,
        "record": line.gold,
        "warnings": findings,
    })))
}

async fn diff(State(s): State<Arc<AppState>>, Path(re_id): Path<String>) -> ApiResult {
    s.re(&re_id)?;
    let machine = s
        .machine
        .get(&re_id)
        .ok_or_else(|| ApiError::not_found(format!("no machine record for `{re_id}`")))?;
    let gold = s
        .gold_of(&re_id)
        .ok_or_else(|| ApiError::not_found(format!("no gold record for `{re_id}`")))?;
    Ok(Json(json!({ "re_id": re_id, "diff": field_diff(machine, &gold.gold.record) })))
}

async fn progress(State(s): State<Arc<AppState>>) -> ApiResult {
    let gold = s.gold.lock().expect("gold lock");
    let mut total = 0;
    let mut done = 0;
    let rows: Vec<Value> = s
        .corpus
        .dialogues
        .values()
        .map(|d| {
            let n = d.res.iter().filter(|r| gold.contains_key(&r.re_id)).count();
            total += d.res.len();
            done += n;
            json!({ "dialogue_id": d.dialogue_id, "res": d.res.len(), "gold": n })
        })
        .collect();
    Ok(Json(json!({ "res": total, "gold": done, "dialogues": rows })))
}

/// A server running on its own runtime thread.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves `router` on `addr` (port 0 picks a free port) until the handle
/// is dropped.
pub fn spawn_background(router: Router, addr: SocketAddr) -> Result<BackgroundServer> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let _ = axum::serve(listener, router)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(BackgroundServer {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

pub fn serve_blocking(store: Store, bind: &str, port: u16, run: Option<&str>, static_dir: Option<PathBuf>) -> Result<Outcome> {
    let state = Arc::new(AppState::load(store, run)?);
    let addr: SocketAddr = format!("{bind}:{port}").parse().with_context(|| format!("bad address {bind}:{port}"))?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!(
            "serving {} on http://{}",
            state.run_id.as_deref().unwrap_or("no run"),
            listener.local_addr()?
        );
        axum::serve(listener, router(state, static_dir)).await?;
        anyhow::Ok(())
    })?;
    Ok(Outcome::Success)
}
