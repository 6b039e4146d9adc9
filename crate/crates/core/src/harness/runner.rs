//! Client for the fidelity runner: one subprocess per task, one JSON
//! request on stdin, one [`ExecutionVerdict`] line on stdout.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Extra wall time granted to the runner process beyond the task timeout
/// before it is killed.
const GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("no fidelity runner command configured")]
    NotConfigured,
    #[error("cannot start runner: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("runner protocol violation: {0}")]
    Protocol(String),
    #[error("pass rate of an empty verdict list")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    Watermarked,
    Attacked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub task_id: String,
    pub variant: Variant,
    pub code: String,
    pub tests: Vec<String>,
    /// Seconds.
    pub timeout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionVerdict {
    pub task_id: String,
    pub variant: Variant,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time: f64,
}

impl ExecutionVerdict {
    fn killed(req: &RunRequest, wall_time: f64) -> Self {
        ExecutionVerdict {
            task_id: req.task_id.clone(),
            variant: req.variant,
            passed: false,
            error: Some("Timeout".into()),
            wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityRunner {
    pub command: Vec<String>,
}

impl FidelityRunner {
    pub fn new(command: Vec<String>) -> Result<Self, RunnerError> {
        if command.is_empty() {
            return Err(RunnerError::NotConfigured);
        }
        Ok(FidelityRunner { command })
    }

    pub fn run(&self, req: &RunRequest) -> Result<ExecutionVerdict, RunnerError> {
        let started = Instant::now();
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let mut line = serde_json::to_vec(req).map_err(|e| RunnerError::Protocol(e.to_string()))?;
        line.push(b'\n');
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // a runner that exits early closes the pipe; its verdict (or
            // lack of one) is what counts
            let _ = stdin.write_all(&line);
        }
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut buf = String::new();
            stdout.read_to_string(&mut buf).map(|_| buf)
        });
        let deadline = Duration::from_secs_f64(req.timeout.max(0.0)) + GRACE;
        loop {
            if child.try_wait()?.is_some() {
                break;
            }
            if started.elapsed() > deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Ok(ExecutionVerdict::killed(req, started.elapsed().as_secs_f64()));
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        let out = reader
            .join()
            .map_err(|_| RunnerError::Protocol("reader thread panicked".into()))??;
        let first = out
            .lines()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| RunnerError::Protocol("no verdict on stdout".into()))?;
        let v: ExecutionVerdict = serde_json::from_str(first).map_err(|e| RunnerError::Protocol(e.to_string()))?;
        if v.task_id != req.task_id || v.variant != req.variant {
            return Err(RunnerError::Protocol(format!("verdict for {}/{:?}", v.task_id, v.variant)));
        }
        if v.passed && v.error.is_some() {
            return Err(RunnerError::Protocol("passed verdict carries an error".into()));
        }
        Ok(v)
    }

    /// Runs every request with at most `workers` runner processes alive.
    /// Results keep the request order.
    pub fn run_all(&self, reqs: &[RunRequest], workers: usize) -> Vec<Result<ExecutionVerdict, RunnerError>> {
        let next = AtomicUsize::new(0);
        let out: Mutex<Vec<Option<Result<ExecutionVerdict, RunnerError>>>> =
            Mutex::new((0..reqs.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers.clamp(1, reqs.len().max(1)) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(req) = reqs.get(i) else { break };
                    let r = self.run(req);
                    out.lock().expect("no poisoned lock")[i] = Some(r);
                });
            }
        });
        out.into_inner()
            .expect("no poisoned lock")
            .into_iter()
            .map(|r| r.expect("every request ran"))
            .collect()
    }
}

pub fn pass_rate(verdicts: &[ExecutionVerdict]) -> Result<f64, RunnerError> {
    if verdicts.is_empty() {
        return Err(RunnerError::EmptyInput);
    }
    Ok(verdicts.iter().filter(|v| v.passed).count() as f64 / verdicts.len() as f64)
}
