use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::protocol::{Request, Response};
use super::Backend;
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT_S: f64 = 600.0;
const STDERR_KEEP: usize = 16 * 1024;

/// How to launch a backend process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaunchSpec {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub env: Vec<(String, String)>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

enum Incoming {
    Line(String),
    Eof,
}

struct Running {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<Incoming>,
    stderr: Arc<Mutex<String>>,
    readers: Vec<JoinHandle<()>>,
}

impl Running {
    fn spawn(spec: &LaunchSpec) -> Result<Self> {
        let mut cmd = Command::new(&spec.command);
        cmd.args(&spec.args)
            .envs(spec.env.iter().cloned())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let mut child = cmd.spawn().map_err(|e| Error::io(&spec.command, e))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr_pipe = child.stderr.take().expect("piped stderr");
        let (tx, rx) = mpsc::channel();
        let out_reader = std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(Incoming::Line(l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(Incoming::Eof);
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        let err_reader = std::thread::spawn(move || {
            let mut buf = [0u8; 4096];
            let mut pipe = stderr_pipe;
            while let Ok(n) = pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().expect("stderr lock");
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                if s.len() > STDERR_KEEP {
                    let mut cut = s.len() - STDERR_KEEP;
                    while !s.is_char_boundary(cut) {
                        cut += 1;
                    }
                    s.drain(..cut);
                }
            }
        });
        log::info!("event=backend_started command={} pid={}", spec.command, child.id());
        Ok(Running {
            stdin: child.stdin.take(),
            child,
            lines: rx,
            stderr,
            readers: vec![out_reader, err_reader],
        })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
        drop(self.stdin.take());
        for r in self.readers.drain(..) {
            let _ = r.join();
        }
    }

    fn crash_error(mut self) -> Error {
        let status = match self.child.wait() {
            Ok(s) => s.to_string(),
            Err(e) => e.to_string(),
        };
        drop(self.stdin.take());
        for r in self.readers.drain(..) {
            let _ = r.join();
        }
        let stderr = self.stderr.lock().expect("stderr lock").clone();
        Error::BackendCrash { status, stderr }
    }
}

/// A backend child process speaking the line protocol on stdin/stdout.
/// A timed-out call kills the process and retries once on a fresh one.
pub struct ProcessBackend {
    spec: LaunchSpec,
    running: Option<Running>,
    next_id: u64,
}

enum Outcome {
    Done(Vec<Response>),
    Timeout,
}

impl ProcessBackend {
    pub fn new(spec: LaunchSpec) -> Self {
        ProcessBackend {
            spec,
            running: None,
            next_id: 1,
        }
    }

    pub fn spec(&self) -> &LaunchSpec {
        &self.spec
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.spec.timeout_s.max(0.001))
    }

    fn ensure_running(&mut self) -> Result<&mut Running> {
        if self.running.is_none() {
            self.running = Some(Running::spawn(&self.spec)?);
        }
        Ok(self.running.as_mut().expect("just started"))
    }

    fn attempt(&mut self, reqs: &[Request]) -> Result<Outcome> {
        let timeout = self.timeout();
        let run = self.ensure_running()?;
        let payload: String = reqs.iter().map(Request::to_line).collect();
        let mut stdin = run.stdin.take().ok_or_else(|| Error::Protocol("backend stdin closed".into()))?;
        // writing in the background keeps a stalled child from blocking us past the timeout
        let writer = std::thread::spawn(move || {
            let ok = stdin.write_all(payload.as_bytes()).and_then(|_| stdin.flush()).is_ok();
            (stdin, ok)
        });
        let mut pending: HashMap<u64, usize> = reqs.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        let mut out: Vec<Option<Response>> = vec![None; reqs.len()];
        let mut result = Ok(Outcome::Timeout);
        while !pending.is_empty() {
            match run.lines.recv_timeout(timeout) {
                Ok(Incoming::Line(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let resp = match Response::from_line(&line) {
                        Ok(r) => r,
                        Err(e) => {
                            result = Err(e);
                            break;
                        }
                    };
                    let Some(i) = pending.remove(&resp.id) else {
                        result = Err(Error::Protocol(format!("response for unknown id {}", resp.id)));
                        break;
                    };
                    if let Err(e) = resp.validate_for(&reqs[i]) {
                        result = Err(e);
                        break;
                    }
                    out[i] = Some(resp);
                }
                Ok(Incoming::Eof) | Err(RecvTimeoutError::Disconnected) => {
                    let run = self.running.take().expect("running");
                    let _ = writer.join();
                    return Err(run.crash_error());
                }
                Err(RecvTimeoutError::Timeout) => {
                    result = Ok(Outcome::Timeout);
                    break;
                }
            }
        }
        if pending.is_empty() {
            let (stdin, _) = writer.join().expect("writer thread");
            self.running.as_mut().expect("running").stdin = Some(stdin);
            return Ok(Outcome::Done(out.into_iter().map(|r| r.expect("answered")).collect()));
        }
        // timeout or protocol failure: the process state is unknown, discard it
        if let Some(run) = self.running.take() {
            run.kill();
        }
        let _ = writer.join();
        result
    }
}

impl Backend for ProcessBackend {
    fn name(&self) -> &str {
        &self.spec.command
    }

    fn next_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn call_many(&mut self, reqs: &[Request]) -> Result<Vec<Response>> {
        for attempt in 0..2 {
            match self.attempt(reqs)? {
                Outcome::Done(r) => return Ok(r),
                Outcome::Timeout => {
                    log::warn!("event=backend_timeout attempt={} timeout_s={}", attempt + 1, self.spec.timeout_s);
                }
            }
        }
        Err(Error::BackendTimeout(self.timeout()))
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        if let Some(mut run) = self.running.take() {
            if let Some(mut stdin) = run.stdin.take() {
                let _ = stdin.write_all(Request::shutdown(0).to_line().as_bytes());
                let _ = stdin.flush();
            }
            // give a well-behaved backend a moment to exit on its own
            for _ in 0..20 {
                if matches!(run.child.try_wait(), Ok(Some(_))) {
                    break;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            run.kill();
        }
    }
}
