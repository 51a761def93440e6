mod common;

use std::fs;

use common::{annotated_store, cli, fixture_copy, prepared_store, records};
use refground::annotator::{MissingReDiagnostic, RunManifest};
use refground_cli::store::read_jsonl;
use refground_cli::{EXIT_DIAGNOSTICS, EXIT_OK, EXIT_USAGE};

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), &["no-such-command"]), EXIT_USAGE);
    assert_eq!(cli(dir.path(), &["ingest"]), EXIT_USAGE);
    assert_eq!(cli(dir.path(), &["derive-states", "--mode", "sideways"]), EXIT_USAGE);
    assert_eq!(cli(dir.path(), &["assign-ids", "--epsilon", "1", "--epsilon-fraction", "0.1"]), EXIT_USAGE);
}

#[test]
fn missing_prerequisites_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), &["assign-ids"]), EXIT_DIAGNOSTICS);
    assert_eq!(cli(dir.path(), &["annotate"]), EXIT_DIAGNOSTICS);
    let prepared = prepared_store();
    assert_eq!(cli(prepared.path(), &["analyze"]), EXIT_DIAGNOSTICS);
}

#[test]
fn broken_corpus_is_rejected_without_writing() {
    let src = fixture_copy();
    let res = src.path().join("res.jsonl");
    let text = fs::read_to_string(&res).unwrap().replace("\"d01_u004\",", "");
    fs::write(&res, text).unwrap();
    let store = tempfile::tempdir().unwrap();
    let from = src.path().to_str().unwrap();
    assert_eq!(cli(store.path(), &["validate", "--corpus", from]), EXIT_DIAGNOSTICS);
    assert_eq!(cli(store.path(), &["ingest", "--from", from]), EXIT_DIAGNOSTICS);
    assert!(!store.path().join("corpus").exists());
}

#[test]
fn malformed_line_is_rejected() {
    let src = fixture_copy();
    fs::write(src.path().join("units.jsonl"), "{not json\n").unwrap();
    let store = tempfile::tempdir().unwrap();
    assert_eq!(cli(store.path(), &["ingest", "--from", src.path().to_str().unwrap()]), EXIT_DIAGNOSTICS);
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = annotated_store("r1", "nearest-instance");
    let store = dir.path();
    let run = store.join("runs/r1");
    for f in ["records.jsonl", "missing.jsonl", "quarantine.jsonl", "diagnostics.jsonl", "manifest.json", "run_config.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.provider, "mock");
    assert_eq!(manifest.config_digest.len(), 64);
    assert_eq!(manifest.requests.len(), 8);
    assert_eq!(records(store, "r1").len(), 14);

    assert_eq!(cli(store, &["validate", "--run", "r1"]), EXIT_OK);
    assert_eq!(cli(store, &["derive-states", "--mode", "raw"]), EXIT_OK);
    assert_eq!(cli(store, &["analyze"]), EXIT_OK);
    let report = store.join("reports/r1");
    for f in refground::analysis::REPORT_FILES {
        assert!(report.join(f).is_file(), "{f}");
    }
    assert_eq!(read_jsonl::<serde_json::Value>(&report.join("states_raw.jsonl")).unwrap().len(), 14);

    // Runs are never overwritten.
    assert_eq!(cli(store, &["annotate", "--run-id", "r1"]), EXIT_DIAGNOSTICS);
}

#[test]
fn manifest_digest_tracks_configuration() {
    let dir = prepared_store();
    let store = dir.path();
    assert_eq!(cli(store, &["annotate", "--run-id", "a"]), EXIT_OK);
    assert_eq!(cli(store, &["annotate", "--run-id", "b"]), EXIT_OK);
    assert_eq!(cli(store, &["annotate", "--run-id", "c", "--mock-policy", "nearest-instance"]), EXIT_OK);
    let digest = |id: &str| {
        let m: RunManifest =
            serde_json::from_str(&fs::read_to_string(store.join("runs").join(id).join("manifest.json")).unwrap())
                .unwrap();
        m.config_digest
    };
    // The output directory is part of the digest, so equal digests across
    // runs are not expected; a policy change must still show.
    assert_ne!(digest("a"), digest("c"));
    assert_eq!(records(store, "a"), records(store, "b"));
}

#[test]
fn partial_run_then_repair_completes_it() {
    let dir = prepared_store();
    let store = dir.path();
    assert_eq!(cli(store, &["annotate", "--run-id", "full"]), EXIT_OK);
    let full = records(store, "full");
    let script = store.join("script.jsonl");
    let kept: Vec<String> = full.iter().step_by(3).map(|r| r.to_json_line()).collect();
    fs::write(&script, kept.join("\n") + "\n").unwrap();

    let args = ["annotate", "--run-id", "part", "--mock-policy", "scripted", "--script", script.to_str().unwrap()];
    assert_eq!(cli(store, &args), EXIT_DIAGNOSTICS);
    let missing: Vec<MissingReDiagnostic> = read_jsonl(&store.join("runs/part/missing.jsonl")).unwrap();
    assert_eq!(missing.len(), full.len() - kept.len());
    assert!(missing.iter().all(|m| m.reason_hint == "no record returned"), "{missing:?}");

    assert_eq!(cli(store, &["repair", "--run", "part", "--run-id", "fixed"]), EXIT_OK);
    assert_eq!(records(store, "fixed"), full);
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(store.join("runs/fixed/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.repairs.as_deref(), Some("part"));
    assert_eq!(cli(store, &["repair", "--run", "fixed"]), EXIT_OK);
}

#[test]
fn eval_against_self_is_perfect_and_rejects_bad_gold() {
    let dir = annotated_store("r1", "echo-speaker");
    let store = dir.path();
    let gold_path = store.join("gold_in.jsonl");
    let lines: Vec<String> = records(store, "r1")
        .into_iter()
        .map(|r| {
            serde_json::to_string(&refground::eval::GoldRecord {
                record: r,
                annotator_id: "a1".into(),
                note: String::new(),
            })
            .unwrap()
        })
        .collect();
    fs::write(&gold_path, lines.join("\n") + "\n").unwrap();
    let g = gold_path.to_str().unwrap();
    assert_eq!(cli(store, &["validate", "--gold", g]), EXIT_OK);
    assert_eq!(cli(store, &["eval", "--gold", g]), EXIT_OK);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(store.join("reports/r1/eval_report.json")).unwrap()).unwrap();
    for row in report["attributes"].as_array().unwrap() {
        assert_eq!(row["accuracy"], 1.0);
        assert_eq!(row["error_count"], 0);
    }
    assert_eq!(report["re_level"]["res_with_error"], 0);
    assert_eq!(fs::read_to_string(store.join("reports/r1/disagreements.csv")).unwrap(), "re_id,field,machine,gold\n");

    // A gold record that names an unknown RE fails validation.
    let bad = lines[0].replace("d01_re01", "d09_re01");
    fs::write(&gold_path, bad + "\n").unwrap();
    assert_eq!(cli(store, &["validate", "--gold", g]), EXIT_DIAGNOSTICS);
    assert_eq!(cli(store, &["eval", "--gold", g]), EXIT_DIAGNOSTICS);
}

#[test]
fn quantificational_speaker_id_policy_reaches_the_schema() {
    let dir = prepared_store();
    let store = dir.path();
    assert_eq!(cli(store, &["build-prompts", "--quantificational-speaker-id", "required"]), EXIT_OK);
    let options = fs::read_to_string(store.join("prompts/validation.json")).unwrap();
    assert!(options.contains("\"required\""), "{options}");
}
