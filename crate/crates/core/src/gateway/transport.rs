//! Request/reply transports. Every backend exchanges the same single-line
//! JSON payloads.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    /// Connection-level failure; worth retrying.
    #[error("transport failure: {0}")]
    Unavailable(String),
    /// The peer answered but the exchange is unusable.
    #[error("protocol violation: {0}")]
    Protocol(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, TransportError::Unavailable(_))
    }
}

pub trait Backend: Send + Sync {
    /// Sends one request line (no trailing newline) and returns the reply line.
    fn call(&self, request: &str) -> Result<String, TransportError>;
}

impl<F> Backend for F
where
    F: Fn(&str) -> Result<String, TransportError> + Send + Sync,
{
    fn call(&self, request: &str) -> Result<String, TransportError> {
        self(request)
    }
}

/// Counting semaphore bounding in-flight requests per endpoint.
pub struct Limiter {
    available: Mutex<usize>,
    released: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(limit: usize) -> Self {
        Limiter { available: Mutex::new(limit.max(1)), released: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *available == 0 {
            available = self.released.wait(available).unwrap_or_else(|e| e.into_inner());
        }
        *available -= 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut available = self.limiter.available.lock().unwrap_or_else(|e| e.into_inner());
        *available += 1;
        self.limiter.released.notify_one();
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Worker {
    fn spawn(command: &str) -> Result<Self, TransportError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| TransportError::Unavailable(format!("spawning `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout was piped"));
        Ok(Worker { child, stdin, stdout })
    }

    fn exchange(&mut self, request: &str) -> Result<String, TransportError> {
        let lost = |e: std::io::Error| TransportError::Unavailable(format!("adapter pipe: {e}"));
        self.stdin.write_all(request.as_bytes()).map_err(lost)?;
        self.stdin.write_all(b"\n").map_err(lost)?;
        self.stdin.flush().map_err(lost)?;
        let mut line = String::new();
        let n = self.stdout.read_line(&mut line).map_err(lost)?;
        if n == 0 {
            return Err(TransportError::Unavailable("adapter closed its output".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Line-oriented subprocess transport: the command is run through `sh -c`,
/// each request is one stdin line and each reply one stdout line. Idle
/// processes are pooled; the endpoint's limiter caps how many exist.
pub struct SubprocessBackend {
    command: String,
    idle: Mutex<Vec<Worker>>,
}

impl SubprocessBackend {
    pub fn new(command: impl Into<String>) -> Self {
        SubprocessBackend { command: command.into(), idle: Mutex::new(Vec::new()) }
    }
}

impl Backend for SubprocessBackend {
    fn call(&self, request: &str) -> Result<String, TransportError> {
        let pooled = self.idle.lock().unwrap_or_else(|e| e.into_inner()).pop();
        let mut worker = match pooled {
            Some(w) => w,
            None => Worker::spawn(&self.command)?,
        };
        let reply = worker.exchange(request)?;
        self.idle.lock().unwrap_or_else(|e| e.into_inner()).push(worker);
        Ok(reply)
    }
}

/// HTTP transport: each request is POSTed as a JSON body to the address.
pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>) -> Self {
        HttpBackend { url: url.into(), agent: ureq::AgentBuilder::new().build() }
    }
}

impl Backend for HttpBackend {
    fn call(&self, request: &str) -> Result<String, TransportError> {
        let result = self.agent.post(&self.url).set("Content-Type", "application/json").send_string(request);
        match result {
            Ok(resp) => resp
                .into_string()
                .map(|s| s.trim_end().to_string())
                .map_err(|e| TransportError::Unavailable(e.to_string())),
            Err(ureq::Error::Status(code, _)) if code >= 500 => {
                Err(TransportError::Unavailable(format!("{}: HTTP {code}", self.url)))
            }
            Err(ureq::Error::Status(code, _)) => Err(TransportError::Protocol(format!("{}: HTTP {code}", self.url))),
            Err(e) => Err(TransportError::Unavailable(e.to_string())),
        }
    }
}

pub type SharedBackend = Arc<dyn Backend>;
