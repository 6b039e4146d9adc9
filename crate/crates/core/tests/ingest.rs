use std::path::Path;

use rosemark::harness::dataset::{ingest, DatasetRecord};
use rosemark::syntax::render;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn mbpp_sample_round_trips_fields() {
    let c = ingest(&fixture("mbpp_sample.jsonl")).unwrap();
    let first = &c.records[0].record;
    assert_eq!(first.task_id, "2");
    assert_eq!(first.prompt, "Write a function to find the shared elements from the given two lists.");
    assert_eq!(first.tests.len(), 2);
    assert!(first.tests[0].starts_with("assert set(similar_elements("));
    let back: DatasetRecord = serde_json::from_str(&serde_json::to_string(first).unwrap()).unwrap();
    assert_eq!(&back, first);
    for r in &c.records {
        assert!(!render(&r.tree).is_empty());
    }
}

#[test]
fn unsupported_records_are_skipped_with_reasons() {
    let c = ingest(&fixture("mbpp_sample.jsonl")).unwrap();
    let ids: Vec<&str> = c.records.iter().map(|r| r.record.task_id.as_str()).collect();
    let skipped: Vec<&str> = c.skipped.iter().map(|s| s.task_id.as_str()).collect();
    assert_eq!(ids, ["2", "Mbpp/11"]);
    assert_eq!(skipped, ["3", "8"]);
    assert!(c.skipped[0].reason.contains("import"));
    assert!(c.skipped[1].reason.contains("lambda"));
    assert!(c.skipped.iter().all(|s| !s.reason.is_empty()));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = ingest(&fixture("absent.jsonl")).unwrap_err();
    assert!(matches!(err, rosemark::Error::Io { .. }));
}
