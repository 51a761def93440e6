#![allow(dead_code)]

use std::path::{Path, PathBuf};

use refground::annotation::AnnotationRecord;
use refground_cli::store::read_jsonl;
use tempfile::TempDir;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

/// Runs the CLI in-process against `store` and returns the exit code.
pub fn cli(store: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["refground".to_string(), "--store".into(), store.display().to_string()];
    argv.extend(args.iter().map(|a| a.to_string()));
    refground_cli::run(argv)
}

/// A store with the fixture ingested, ids assigned and prompts built.
pub fn prepared_store() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let from = fixture_dir();
    assert_eq!(cli(dir.path(), &["ingest", "--from", from.to_str().unwrap()]), 0);
    assert_eq!(cli(dir.path(), &["assign-ids"]), 0);
    assert_eq!(cli(dir.path(), &["build-prompts"]), 0);
    dir
}

/// `prepared_store` plus one mock run with id `run_id`.
pub fn annotated_store(run_id: &str, policy: &str) -> TempDir {
    let dir = prepared_store();
    assert_eq!(cli(dir.path(), &["annotate", "--run-id", run_id, "--mock-policy", policy]), 0);
    dir
}

pub fn records(store: &Path, run_id: &str) -> Vec<AnnotationRecord> {
    read_jsonl(&store.join("runs").join(run_id).join("records.jsonl")).unwrap()
}

/// Copies the fixture into a fresh directory so a test can damage it.
pub fn fixture_copy() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixture_dir()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    dir
}
