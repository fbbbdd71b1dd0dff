//! In-process stub backend speaking the model-backend wire protocol.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Serialize;

use crate::classify::remote::{ErrorResponse, HealthResponse, PredictRequest, PredictResponse};
use crate::classify::{BinaryModel, ClassifyError};
use crate::quality::QualityAttribute;

enum Scoring {
    Fixed(f64),
    Trained(BTreeMap<String, BinaryModel>),
}

/// Scores requests with either a constant or loaded built-in models.
pub struct StubBackend {
    names: Vec<String>,
    scoring: Scoring,
}

impl StubBackend {
    /// Answers every quality model with the constant `score`.
    pub fn fixed(score: f64) -> Result<Self, ClassifyError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(ClassifyError::InvalidConfig(format!("stub score {score} is outside [0, 1]")));
        }
        Ok(StubBackend {
            names: QualityAttribute::ALL.iter().map(|q| q.name().to_string()).collect(),
            scoring: Scoring::Fixed(score),
        })
    }

    /// Serves each model under its quality name.
    pub fn from_models(models: Vec<BinaryModel>) -> Self {
        let map: BTreeMap<String, BinaryModel> = models
            .into_iter()
            .map(|m| (m.quality.name().to_string(), m))
            .collect();
        StubBackend {
            names: map.keys().cloned().collect(),
            scoring: Scoring::Trained(map),
        }
    }

    /// Loads every `{quality}.qtag` present in `dir`; at least one must exist.
    pub fn load_dir(dir: &Path) -> Result<Self, ClassifyError> {
        let mut models = Vec::new();
        for q in QualityAttribute::ALL {
            let path = dir.join(format!("{}.qtag", q.name()));
            if path.is_file() {
                let file = std::fs::File::open(&path)?;
                models.push(BinaryModel::read_from(io::BufReader::new(file))?);
            }
        }
        if models.is_empty() {
            return Err(ClassifyError::Format(format!("no .qtag models in {}", dir.display())));
        }
        Ok(Self::from_models(models))
    }

    pub fn model_names(&self) -> &[String] {
        &self.names
    }

    fn predict(&self, request: &PredictRequest) -> Result<Vec<f64>, String> {
        match &self.scoring {
            Scoring::Fixed(score) if self.names.contains(&request.model) => {
                Ok(vec![*score; request.texts.len()])
            }
            Scoring::Trained(models) if models.contains_key(&request.model) => {
                let model = &models[&request.model];
                Ok(request.texts.iter().map(|t| model.score(t)).collect())
            }
            _ => Err(format!("unknown model '{}'", request.model)),
        }
    }

    fn health(&self) -> HealthResponse {
        HealthResponse {
            status: "ok".into(),
            models: self.names.clone(),
        }
    }

    /// Routes one HTTP request; returns status and JSON body.
    pub fn handle(&self, method: &str, path: &str, body: &str) -> (u16, String) {
        match (method, path) {
            ("GET", "/v1/health") => (200, json(&self.health())),
            ("POST", "/v1/predict") => match serde_json::from_str::<PredictRequest>(body) {
                Ok(request) => match self.predict(&request) {
                    Ok(scores) => (200, json(&PredictResponse { scores })),
                    Err(error) => (400, error_json(error)),
                },
                Err(e) => (400, error_json(format!("bad request: {e}"))),
            },
            (_, "/v1/health" | "/v1/predict") => (405, error_json(format!("method {method} not allowed"))),
            _ => (404, error_json(format!("no route for {path}"))),
        }
    }

    /// Offline mode: one JSON request per input line, one reply per output
    /// line. `{}` asks for health.
    pub fn serve_stdio<R: BufRead, W: Write>(&self, input: R, mut output: W) -> io::Result<()> {
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let reply = match serde_json::from_str::<serde_json::Value>(&line) {
                Ok(serde_json::Value::Object(m)) if m.is_empty() => self.handle("GET", "/v1/health", ""),
                Ok(_) => self.handle("POST", "/v1/predict", &line),
                Err(e) => (400, error_json(format!("bad request: {e}"))),
            };
            writeln!(output, "{}", reply.1)?;
            output.flush()?;
        }
        Ok(())
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("wire types serialize")
}

fn error_json(error: String) -> String {
    json(&ErrorResponse { error })
}

/// A running HTTP stub. Dropping it stops the server.
pub struct StubServer {
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    url: String,
}

impl StubServer {
    /// Binds `addr` (e.g. `127.0.0.1:0`) and serves on a background thread.
    pub fn start(backend: StubBackend, addr: &str) -> io::Result<Self> {
        let server = Arc::new(tiny_http::Server::http(addr).map_err(io::Error::other)?);
        let url = match server.server_addr().to_ip() {
            Some(sock) => format!("http://{sock}"),
            None => return Err(io::Error::other("stub server needs an IP listener")),
        };
        let worker = Arc::clone(&server);
        let thread = std::thread::spawn(move || {
            for mut request in worker.incoming_requests() {
                let mut body = String::new();
                let (status, reply) = match request.as_reader().read_to_string(&mut body) {
                    Ok(_) => backend.handle(request.method().as_str(), request.url(), &body),
                    Err(e) => (400, error_json(format!("unreadable body: {e}"))),
                };
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
                    .expect("static header");
                let response = tiny_http::Response::from_string(reply)
                    .with_status_code(status)
                    .with_header(header);
                if let Err(e) = request.respond(response) {
                    log::warn!("stub server failed to respond: {e}");
                }
            }
        });
        Ok(StubServer {
            server,
            thread: Some(thread),
            url,
        })
    }

    /// Base URL, e.g. `http://127.0.0.1:43117`.
    pub fn url(&self) -> &str {
        &self.url
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop();
    }
}
