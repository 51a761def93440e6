mod common;

use std::sync::Arc;

use common::annotated_store;
use refground_cli::server::{router, spawn_background, AppState, BackgroundServer};
use refground_cli::store::Store;
use serde_json::{json, Value};
use tempfile::TempDir;

struct Api {
    _dir: TempDir,
    server: BackgroundServer,
    agent: ureq::Agent,
}

impl Api {
    fn start() -> Self {
        let dir = annotated_store("r1", "nearest-instance");
        let state = Arc::new(AppState::load(Store::new(dir.path()), None).unwrap());
        let server = spawn_background(router(state, None), "127.0.0.1:0".parse().unwrap()).unwrap();
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self { _dir: dir, server, agent }
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let mut resp = self.agent.get(&self.server.url(path)).call().unwrap();
        (resp.status().as_u16(), resp.body_mut().read_json().unwrap())
    }

    fn put(&self, path: &str, body: &Value) -> (u16, Value) {
        let mut resp = self.agent.put(&self.server.url(path)).send_json(body).unwrap();
        (resp.status().as_u16(), resp.body_mut().read_json().unwrap())
    }

    /// The machine record of `re_id` as a gold submission body.
    fn gold_body(&self, re_id: &str) -> Value {
        let (_, re) = self.get(&format!("/api/res/{re_id}"));
        let mut body = re["machine"].clone();
        body["annotator_id"] = json!("a1");
        body
    }
}

fn rule_ids(body: &Value) -> Vec<String> {
    body["diagnostics"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["rule_id"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn read_endpoints() {
    let api = Api::start();
    let (status, body) = api.get("/api/dialogues");
    assert_eq!(status, 200);
    assert_eq!(body["run_id"], "r1");
    assert_eq!(body["dialogues"].as_array().unwrap().len(), 2);

    let (status, body) = api.get("/api/dialogues/d01/transactions/1");
    assert_eq!(status, 200);
    assert_eq!(body["target_re_ids"], json!(["d01_re02", "d01_re03"]));
    let context = body["context_dialogue"].as_str().unwrap();
    assert!(context.contains("d01_re02"), "{context}");
    assert!(body["context_dialogue_acts"].as_str().unwrap().contains("instruct"));

    let (status, body) = api.get("/api/res/d01_re02");
    assert_eq!(status, 200);
    assert_eq!(body["re"]["surface_text"], "the parked van");
    assert_eq!(body["machine"]["re_id"], "d01_re02");
    assert!(body["gold"].is_null());
    let giver = body["candidates"]["giver"].as_array().unwrap();
    let follower = body["candidates"]["follower"].as_array().unwrap();
    assert_eq!(giver.len(), 5);
    assert_eq!(follower.len(), 4);
    assert!(giver.iter().any(|c| c["id"] == "m0_parked_van#1@g" && c["discrepancy"] == "multiplicity"));

    let (status, body) = api.get("/api/progress");
    assert_eq!(status, 200);
    assert_eq!(body["res"], 14);
    assert_eq!(body["gold"], 0);
}

#[test]
fn unknown_ids_are_404() {
    let api = Api::start();
    assert_eq!(api.get("/api/res/nope").0, 404);
    assert_eq!(api.get("/api/dialogues/nope/transactions/0").0, 404);
    assert_eq!(api.get("/api/dialogues/d01/transactions/99").0, 404);
    assert_eq!(api.get("/api/gold/d01_re01").0, 404);
    assert_eq!(api.get("/api/diff/d01_re01").0, 404);
    assert_eq!(api.put("/api/gold/nope", &json!({})).0, 404);
}

#[test]
fn cascade_invalid_gold_is_422_with_rule_id() {
    let api = Api::start();
    let mut body = api.gold_body("d01_re01");
    assert_eq!(body["is_grounded"], true);
    body.as_object_mut().unwrap().remove("addressee_landmark");
    let (status, resp) = api.put("/api/gold/d01_re01", &body);
    assert_eq!(status, 422);
    assert!(rule_ids(&resp).contains(&"addressee_landmark_gating".to_string()), "{resp}");

    // An opened attribute left out entirely.
    let mut body = api.gold_body("d01_re01");
    body.as_object_mut().unwrap().remove("is_imagined");
    let (status, resp) = api.put("/api/gold/d01_re01", &body);
    assert_eq!(status, 422, "{resp}");
    assert!(!rule_ids(&resp).is_empty());

    // Nothing was written.
    assert_eq!(api.get("/api/gold/d01_re01").0, 404);
}

#[test]
fn speaker_side_and_path_mismatch_are_422() {
    let api = Api::start();
    let mut body = api.gold_body("d01_re01");
    body["speaker_landmark"] = json!("m0_caravan_park#0@f");
    let (status, resp) = api.put("/api/gold/d01_re01", &body);
    assert_eq!(status, 422);
    assert!(rule_ids(&resp).contains(&"speaker_side".to_string()), "{resp}");

    let body = api.gold_body("d01_re02");
    let (status, resp) = api.put("/api/gold/d01_re01", &body);
    assert_eq!(status, 422);
    assert!(rule_ids(&resp).contains(&"re_id_mismatch".to_string()));
}

#[test]
fn revisions_detect_conflicting_writes() {
    let api = Api::start();
    let body = api.gold_body("d01_re02");
    let (status, resp) = api.put("/api/gold/d01_re02", &body);
    assert_eq!(status, 200, "{resp}");
    assert_eq!(resp["revision"], 1);

    // A second writer that never saw revision 1.
    let (status, resp) = api.put("/api/gold/d01_re02", &body);
    assert_eq!(status, 409);
    assert_eq!(resp["current_revision"], 1);

    let mut next = body.clone();
    next["base_revision"] = json!(1);
    next["note"] = json!("checked");
    assert_eq!(api.put("/api/gold/d01_re02", &next).0, 200);
    // The same base again is now stale.
    assert_eq!(api.put("/api/gold/d01_re02", &next).0, 409);

    let (status, gold) = api.get("/api/gold/d01_re02");
    assert_eq!(status, 200);
    assert_eq!(gold["revision"], 2);
    assert_eq!(gold["note"], "checked");
    assert_eq!(api.get("/api/progress").1["gold"], 1);
}

#[test]
fn diff_is_empty_for_identical_records_and_lists_changes() {
    let api = Api::start();
    let body = api.gold_body("d01_re02");
    assert_eq!(api.put("/api/gold/d01_re02", &body).0, 200);
    let (status, diff) = api.get("/api/diff/d01_re02");
    assert_eq!(status, 200);
    assert_eq!(diff["diff"], json!([]));

    // The reason is free text and never part of the diff.
    let mut changed = body.clone();
    changed["addressee_landmark"] = json!("m0_caravan_park#0@f");
    changed["reason"] = json!("took it for the park");
    changed["base_revision"] = json!(1);
    let (status, resp) = api.put("/api/gold/d01_re02", &changed);
    assert_eq!(status, 200, "{resp}");
    let (_, diff) = api.get("/api/diff/d01_re02");
    let fields: Vec<&str> = diff["diff"].as_array().unwrap().iter().map(|d| d["field"].as_str().unwrap()).collect();
    assert_eq!(fields, ["addressee_landmark"]);
}

#[test]
fn gold_log_survives_a_restart() {
    let dir = annotated_store("r1", "echo-speaker");
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let start = || {
        let state = Arc::new(AppState::load(Store::new(dir.path()), Some("r1")).unwrap());
        spawn_background(router(state, None), "127.0.0.1:0".parse().unwrap()).unwrap()
    };
    let server = start();
    let mut machine: Value = agent
        .get(&server.url("/api/res/d02_re01"))
        .call()
        .unwrap()
        .body_mut()
        .read_json()
        .unwrap();
    let mut body = machine["machine"].take();
    body["annotator_id"] = json!("a2");
    assert_eq!(agent.put(&server.url("/api/gold/d02_re01")).send_json(&body).unwrap().status(), 200);
    drop(server);

    let server = start();
    let mut resp = agent.get(&server.url("/api/gold/d02_re01")).call().unwrap();
    assert_eq!(resp.status(), 200);
    let gold: Value = resp.body_mut().read_json().unwrap();
    assert_eq!(gold["revision"], 1);
    assert_eq!(gold["annotator_id"], "a2");
}

#[test]
fn static_assets_are_served() {
    let dir = annotated_store("r1", "echo-speaker");
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<html>ui</html>").unwrap();
    let state = Arc::new(AppState::load(Store::new(dir.path()), None).unwrap());
    let server = spawn_background(router(state, Some(assets.path().into())), "127.0.0.1:0".parse().unwrap()).unwrap();
    let mut resp = ureq::get(&server.url("/")).call().unwrap();
    assert_eq!(resp.body_mut().read_to_string().unwrap(), "<html>ui</html>");
}
