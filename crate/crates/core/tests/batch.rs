use std::collections::HashSet;
use std::fs;

use corefprobe::corpus::{build_condition, GenerationConfig};
use corefprobe::jsonl::read_jsonl;
use corefprobe::model_client::{run_batch, BatchMode, BatchOptions, Decoding, RetryPolicy};
use corefprobe::{Banks, Condition, GenerationRecord, MockBackend, ProbeInstance, ScoreRecord};

fn probes(c: Condition, n: usize) -> Vec<ProbeInstance> {
    let banks = Banks::bundled().unwrap();
    let mut v = build_condition(c, &banks, &GenerationConfig::default()).unwrap();
    v.truncate(n);
    v
}

fn opts(retries: u32) -> BatchOptions {
    BatchOptions {
        max_parallel_requests: 3,
        retry: RetryPolicy { retries, initial_backoff_ms: 1, max_backoff_ms: 1 },
    }
}

#[test]
fn interrupted_run_resumes_without_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scores.jsonl");
    let ps = probes(Condition::EnPl, 60);
    let m = MockBackend::new("mock");
    let first = run_batch(&ps, &m, &BatchMode::Score, &out, &opts(0)).unwrap();
    assert_eq!((first.succeeded, first.skipped_existing), (60, 0));
    let full: Vec<ScoreRecord> = read_jsonl(&out).unwrap();

    // simulate a crash: 15 records lost and the last write cut short
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut cut = lines[..45].join("\n");
    cut.push('\n');
    cut.push_str(&lines[45][..lines[45].len() / 2]);
    fs::write(&out, cut).unwrap();

    let second = run_batch(&ps, &m, &BatchMode::Score, &out, &opts(0)).unwrap();
    assert_eq!(second.skipped_existing, 45);
    assert_eq!(second.succeeded, 15);
    assert_eq!(second.repaired_lines, 1);
    assert!(second.is_complete());

    let recs: Vec<ScoreRecord> = read_jsonl(&out).unwrap();
    let ids: HashSet<&str> = recs.iter().map(|r| r.instance_id.as_str()).collect();
    assert_eq!(recs.len(), 60);
    assert_eq!(ids.len(), 60);
    for r in &full {
        assert!(recs.contains(r), "record for {} changed after resume", r.instance_id);
    }

    let third = run_batch(&ps, &m, &BatchMode::Score, &out, &opts(0)).unwrap();
    assert_eq!((third.succeeded, third.skipped_existing), (0, 60));
}

#[test]
fn scripted_failures_are_reported_and_recoverable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scores.jsonl");
    let ps = probes(Condition::EnPl, 30);
    // one context is shared by the three coreferents of a probe
    let needle = ps[0].context_text.clone();
    let failing: HashSet<&str> =
        ps.iter().filter(|p| p.context_text == needle).map(|p| p.instance_id.as_str()).collect();
    assert_eq!(failing.len(), 3);

    let m = MockBackend::new("mock").fail_on(&needle, None);
    let s = run_batch(&ps, &m, &BatchMode::Score, &out, &opts(0)).unwrap();
    assert_eq!(s.failed.len(), 3);
    assert_eq!(s.succeeded, 27);
    assert!(!s.is_complete());
    let failed: HashSet<&str> = s.failed.iter().map(|f| f.instance_id.as_str()).collect();
    assert_eq!(failed, failing);
    assert!(s.failed[0].error.contains("1 attempt"));

    // transient failures are absorbed by retries
    let m = MockBackend::new("mock").fail_on(&needle, Some(2));
    let s = run_batch(&ps, &m, &BatchMode::Score, &out, &opts(3)).unwrap();
    assert!(s.is_complete());
    assert_eq!((s.skipped_existing, s.succeeded), (27, 3));
}

#[test]
fn generation_records_carry_decoding_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen.jsonl");
    let ps = probes(Condition::DeGen, 12);
    let m = MockBackend::new("mock").with_completion(" sie waren sehr froh und gingen dann nach Hause heim");
    let mode = BatchMode::Generate { max_tokens: 10, decoding: Decoding::Greedy };
    let s = run_batch(&ps, &m, &mode, &out, &opts(0)).unwrap();
    assert!(s.is_complete());
    let recs: Vec<GenerationRecord> = read_jsonl(&out).unwrap();
    assert_eq!(recs.len(), 12);
    for r in &recs {
        assert_eq!(r.max_tokens, 10);
        assert_eq!(r.decoding, Decoding::Greedy);
        assert_eq!(r.continuation_text.split_whitespace().count(), 10);
        let p = ps.iter().find(|p| p.instance_id == r.instance_id).unwrap();
        assert_eq!(r.prompt_text, p.context_text);
    }
}

#[test]
fn zero_parallelism_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ps = probes(Condition::EnPl, 3);
    let o = BatchOptions { max_parallel_requests: 0, retry: RetryPolicy::none() };
    assert!(run_batch(&ps, &MockBackend::new("m"), &BatchMode::Score, &dir.path().join("x"), &o).is_err());
}
