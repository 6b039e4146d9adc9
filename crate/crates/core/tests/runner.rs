use std::path::Path;
use std::time::Instant;

use rosemark::harness::runner::{pass_rate, FidelityRunner, RunRequest, Variant};

fn stub() -> FidelityRunner {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stub_runner.py");
    FidelityRunner::new(vec!["python3".into(), script.display().to_string()]).unwrap()
}

fn req(id: &str, code: &str, tests: &[&str], timeout: f64) -> RunRequest {
    RunRequest {
        task_id: id.into(),
        variant: Variant::Watermarked,
        code: code.into(),
        tests: tests.iter().map(|t| t.to_string()).collect(),
        timeout,
    }
}

const ADD: &str = "def add(a, b):\n    return a + b\n";

#[test]
fn passing_program() {
    let v = stub().run(&req("ok", ADD, &["assert add(1, 2) == 3"], 5.0)).unwrap();
    assert!(v.passed);
    assert_eq!(v.error, None);
    assert_eq!(v.task_id, "ok");
    assert!(v.wall_time <= 5.0);
}

#[test]
fn failing_assertion() {
    let v = stub().run(&req("bad", ADD, &["assert add(1, 2) == 4"], 5.0)).unwrap();
    assert!(!v.passed);
    assert_eq!(v.error.as_deref(), Some("AssertionError"));
}

#[test]
fn infinite_loop_times_out_promptly() {
    let timeout = 1.0;
    let started = Instant::now();
    let v = stub()
        .run(&req("loop", "def spin():\n    while True:\n        pass\n", &["spin()"], timeout))
        .unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(!v.passed);
    assert_eq!(v.error.as_deref(), Some("Timeout"));
    assert!(elapsed < timeout + 1.0, "took {elapsed}s");
}

#[test]
fn runs_do_not_share_state() {
    let runner = stub();
    let leak = "import builtins\nbuiltins.LEAK = getattr(builtins, 'LEAK', 0) + 1\n";
    for _ in 0..3 {
        let v = runner.run(&req("h", leak, &["assert LEAK == 1"], 5.0)).unwrap();
        assert!(v.passed, "{:?}", v.error);
    }
}

#[test]
fn pool_keeps_request_order() {
    let reqs: Vec<RunRequest> = (0..8)
        .map(|i| req(&format!("t{i}"), ADD, &[if i % 2 == 0 { "assert add(1, 1) == 2" } else { "assert False" }], 5.0))
        .collect();
    let out: Vec<_> = stub().run_all(&reqs, 3).into_iter().map(Result::unwrap).collect();
    for (i, v) in out.iter().enumerate() {
        assert_eq!(v.task_id, format!("t{i}"));
        assert_eq!(v.passed, i % 2 == 0);
    }
    assert_eq!(pass_rate(&out).unwrap(), 0.5);
}

#[test]
fn missing_runner_binary_is_a_spawn_error() {
    let r = FidelityRunner::new(vec!["/nonexistent/runner".into()]).unwrap();
    assert!(r.run(&req("x", ADD, &[], 1.0)).is_err());
}
