//! Client side of the model-backend wire protocol.
//!
//! `POST /v1/predict` takes `{"model": .., "texts": [..]}` and answers
//! `{"scores": [..]}`; `GET /v1/health` answers
//! `{"status": "ok", "models": [..]}`. Unknown models get HTTP 400 with
//! `{"error": ".."}`. The offline transport exchanges the same objects, one
//! per line, with a child process over stdin/stdout.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub model: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub models: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

/// Failure talking to a backend. Predictions are idempotent, so every kind
/// may be retried; [`RemoteError::is_transient`] marks the ones worth it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RemoteError {
    #[error("backend timed out: {0}")]
    Timeout(String),
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend returned {got} scores for {expected} texts")]
    LengthMismatch { expected: usize, got: usize },
    #[error("backend score {score} at position {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },
    #[error("backend rejected request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
}

impl RemoteError {
    pub fn is_retry_safe(&self) -> bool {
        true
    }

    pub fn is_transient(&self) -> bool {
        match self {
            RemoteError::Timeout(_) | RemoteError::Unreachable(_) => true,
            RemoteError::Rejected { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

struct ProcessChannel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for ProcessChannel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

enum Transport {
    Http { agent: ureq::Agent, base: String },
    Process(Mutex<ProcessChannel>),
}

/// Handle to a scoring backend.
pub struct RemoteBackend {
    transport: Transport,
    retries: usize,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.transport {
            Transport::Http { base, .. } => write!(f, "RemoteBackend(http {base})"),
            Transport::Process(_) => write!(f, "RemoteBackend(process)"),
        }
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

impl RemoteBackend {
    pub fn http(base_url: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend {
            transport: Transport::Http {
                agent,
                base: base_url.trim_end_matches('/').to_string(),
            },
            retries: 0,
        }
    }

    /// Offline mode: spawns `program args..` and speaks JSON lines to it.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, RemoteError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| RemoteError::Unreachable(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(RemoteBackend {
            transport: Transport::Process(Mutex::new(ProcessChannel { child, stdin, stdout })),
            retries: 0,
        })
    }

    /// Retries transient failures up to `retries` extra times.
    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn predict(&self, model: &str, texts: &[String]) -> Result<Vec<f64>, RemoteError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let request = PredictRequest {
            model: model.to_string(),
            texts: texts.to_vec(),
        };
        let body = serde_json::to_string(&request).expect("request serializes");
        let mut attempt = 0;
        loop {
            let result = self
                .exchange("/v1/predict", Some(&body))
                .and_then(|raw| parse_scores(&raw, texts.len()));
            match result {
                Err(e) if e.is_transient() && attempt < self.retries => attempt += 1,
                other => return other,
            }
        }
    }

    pub fn health(&self) -> Result<HealthResponse, RemoteError> {
        let raw = self.exchange("/v1/health", None)?;
        serde_json::from_str(&raw).map_err(|e| RemoteError::Malformed(e.to_string()))
    }

    fn exchange(&self, path: &str, body: Option<&str>) -> Result<String, RemoteError> {
        match &self.transport {
            Transport::Http { agent, base } => {
                let url = format!("{base}{path}");
                let response = match body {
                    Some(b) => agent
                        .post(&url)
                        .header("content-type", "application/json")
                        .send(b),
                    None => agent.get(&url).call(),
                };
                let mut response = response.map_err(classify_ureq_error)?;
                let status = response.status().as_u16();
                let text = response
                    .body_mut()
                    .read_to_string()
                    .map_err(classify_ureq_error)?;
                if status == 200 {
                    Ok(text)
                } else {
                    let message = serde_json::from_str::<ErrorResponse>(&text)
                        .map(|e| e.error)
                        .unwrap_or(text);
                    Err(RemoteError::Rejected { status, message })
                }
            }
            Transport::Process(channel) => {
                let mut ch = channel
                    .lock()
                    .map_err(|_| RemoteError::Unreachable("backend channel poisoned".into()))?;
                let line = body.unwrap_or("{}");
                writeln!(ch.stdin, "{line}")
                    .and_then(|_| ch.stdin.flush())
                    .map_err(|e| RemoteError::Unreachable(e.to_string()))?;
                let mut reply = String::new();
                let n = ch
                    .stdout
                    .read_line(&mut reply)
                    .map_err(|e| RemoteError::Unreachable(e.to_string()))?;
                if n == 0 {
                    return Err(RemoteError::Unreachable("backend process closed its output".into()));
                }
                if let Ok(err) = serde_json::from_str::<ErrorResponse>(&reply) {
                    return Err(RemoteError::Rejected {
                        status: 400,
                        message: err.error,
                    });
                }
                Ok(reply)
            }
        }
    }
}

fn classify_ureq_error(e: ureq::Error) -> RemoteError {
    match e {
        ureq::Error::Timeout(t) => RemoteError::Timeout(t.to_string()),
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
            RemoteError::Timeout(io.to_string())
        }
        ureq::Error::Io(io) => RemoteError::Unreachable(io.to_string()),
        ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => {
            RemoteError::Unreachable(e.to_string())
        }
        other => RemoteError::Malformed(other.to_string()),
    }
}

fn parse_scores(raw: &str, expected: usize) -> Result<Vec<f64>, RemoteError> {
    let response: PredictResponse =
        serde_json::from_str(raw).map_err(|e| RemoteError::Malformed(e.to_string()))?;
    if response.scores.len() != expected {
        return Err(RemoteError::LengthMismatch {
            expected,
            got: response.scores.len(),
        });
    }
    if let Some((index, &score)) = response
        .scores
        .iter()
        .enumerate()
        .find(|(_, s)| !(0.0..=1.0).contains(*s))
    {
        return Err(RemoteError::ScoreOutOfRange { index, score });
    }
    Ok(response.scores)
}

/// Scores `texts` with `model_name` on `backend`; order-aligned.
pub fn remote_predict(
    backend: &RemoteBackend,
    model_name: &str,
    texts: &[String],
) -> Result<Vec<f64>, RemoteError> {
    backend.predict(model_name, texts)
}
