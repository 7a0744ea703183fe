//! External quality evaluator speaking line-delimited JSON over a child
//! process's stdin/stdout.
//!
//! Each request carries a `request_id`; responses that echo a different id
//! (late answers to a timed-out request) are discarded.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRequest {
    pub request_id: u64,
    pub episode_id: u64,
    pub turn_index: usize,
    pub role_id: usize,
    pub utterance: String,
    pub context: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResponse {
    #[serde(default)]
    pub request_id: Option<u64>,
    pub passed: bool,
    #[serde(default)]
    pub reasons: Vec<String>,
}

pub trait ExternalEvaluator: Send {
    /// `Ok(None)` means no answer within the timeout.
    fn evaluate(&mut self, request: &EvaluationRequest) -> Result<Option<EvaluationResponse>>;
}

/// Verdict after applying the fail-open/fail-closed policy. The flag reports
/// whether the evaluator failed to answer.
pub fn resolve(response: Option<EvaluationResponse>, fail_closed: bool) -> (bool, Vec<String>, bool) {
    match response {
        Some(r) => (r.passed, r.reasons, false),
        None if fail_closed => (false, vec!["evaluator_timeout".into()], true),
        None => (true, Vec::new(), true),
    }
}

pub struct ProcessEvaluator {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    timeout: Duration,
    next_id: u64,
}

impl ProcessEvaluator {
    pub fn spawn(argv: &[String], timeout: Duration) -> Result<Self> {
        let (prog, args) = argv.split_first().ok_or_else(|| Error::Config("empty evaluator command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Evaluator(format!("cannot start {prog}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines: rx, timeout, next_id: 0 })
    }
}

impl ExternalEvaluator for ProcessEvaluator {
    fn evaluate(&mut self, request: &EvaluationRequest) -> Result<Option<EvaluationResponse>> {
        let id = self.next_id;
        self.next_id += 1;
        let mut req = request.clone();
        req.request_id = id;
        let mut line = serde_json::to_string(&req)?;
        line.push('\n');
        if self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.flush()).is_err() {
            // a dead child is treated like a timeout
            return Ok(None);
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(text) => {
                    let resp: EvaluationResponse = serde_json::from_str(&text)
                        .map_err(|e| Error::Evaluator(format!("malformed response {text:?}: {e}")))?;
                    match resp.request_id {
                        Some(rid) if rid != id => continue,
                        _ => return Ok(Some(resp)),
                    }
                }
                Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => return Ok(None),
            }
        }
    }
}

impl Drop for ProcessEvaluator {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_policies() {
        let ok = EvaluationResponse { request_id: None, passed: false, reasons: vec!["x".into()] };
        assert_eq!(resolve(Some(ok), false), (false, vec!["x".to_string()], false));
        assert_eq!(resolve(None, false), (true, vec![], true));
        assert_eq!(resolve(None, true).0, false);
    }
}
