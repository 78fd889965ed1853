//! Subprocess sandbox behind the `execute_code` tool and the code judge.
//!
//! Spawns a configured interpreter on the code, feeds stdin, captures stdout
//! and stderr up to a byte cap, enforces a wall-clock timeout per call, and
//! reports `{stdout, stderr, exit_status, timed_out}`. A spawn failure is a
//! fault, distinct from a program that runs and misbehaves.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::policy::InFlightLimit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    /// Interpreter executable, e.g. `python3`.
    pub interpreter: String,
    /// Default wall-clock timeout per call in seconds.
    pub timeout_s: f64,
    /// Captured-output cap per stream in bytes.
    pub output_cap_bytes: usize,
    /// Concurrent sandbox processes allowed.
    pub max_processes: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            interpreter: "python3".to_string(),
            timeout_s: 30.0,
            output_cap_bytes: 64 * 1024,
            max_processes: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxOutcome {
    pub stdout: String,
    pub stderr: String,
    /// Process exit code; absent when killed by signal or timeout.
    pub exit_status: Option<i32>,
    pub timed_out: bool,
}

impl SandboxOutcome {
    pub fn success(&self) -> bool {
        !self.timed_out && self.exit_status == Some(0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("cannot spawn interpreter '{interpreter}': {source}")]
    Spawn { interpreter: String, source: std::io::Error },
    #[error("sandbox i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Shared executor; clones share the process cap.
#[derive(Clone)]
pub struct Sandbox {
    config: SandboxConfig,
    limiter: Arc<InFlightLimit>,
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Self {
        let limiter = Arc::new(InFlightLimit::new(config.max_processes));
        Sandbox { config, limiter }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Run `code` with the default timeout.
    pub fn run(&self, code: &str, stdin: &str) -> Result<SandboxOutcome, SandboxError> {
        self.run_with_timeout(code, stdin, Duration::from_secs_f64(self.config.timeout_s))
    }

    /// Run `code` with an explicit wall-clock timeout.
    pub fn run_with_timeout(
        &self,
        code: &str,
        stdin: &str,
        timeout: Duration,
    ) -> Result<SandboxOutcome, SandboxError> {
        let _slot = self.limiter.acquire();

        let dir = tempfile::tempdir()?;
        let code_path = dir.path().join("snippet.py");
        std::fs::write(&code_path, code)?;

        let mut child = Command::new(&self.config.interpreter)
            .arg(&code_path)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| SandboxError::Spawn {
                interpreter: self.config.interpreter.clone(),
                source,
            })?;

        // Feed stdin and close it so programs reading to EOF terminate.
        if let Some(mut handle) = child.stdin.take() {
            let _ = handle.write_all(stdin.as_bytes());
        }

        let cap = self.config.output_cap_bytes;
        let stdout_pipe = child.stdout.take().expect("stdout piped");
        let stderr_pipe = child.stderr.take().expect("stderr piped");
        let out_reader = std::thread::spawn(move || read_capped(stdout_pipe, cap));
        let err_reader = std::thread::spawn(move || read_capped(stderr_pipe, cap));

        let deadline = Instant::now() + timeout;
        let mut timed_out = false;
        let status = loop {
            match child.try_wait()? {
                Some(status) => break Some(status),
                None if Instant::now() >= deadline => {
                    timed_out = true;
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };

        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();

        Ok(SandboxOutcome {
            stdout,
            stderr,
            exit_status: status.and_then(|s| s.code()),
            timed_out,
        })
    }
}

/// Read a stream to EOF, keeping at most `cap` bytes (lossy UTF-8).
fn read_capped(mut stream: impl Read, cap: usize) -> String {
    let mut kept: Vec<u8> = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match stream.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                kept.extend_from_slice(&buf[..n.min(room)]);
                // Past the cap we keep draining so the child never blocks on
                // a full pipe.
            }
        }
    }
    String::from_utf8_lossy(&kept).into_owned()
}
