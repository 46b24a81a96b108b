//! HTTP scorer client and a loopback stub server.
//!
//! Request: `{"items":[{"id","features","text"?}]}`.
//! Response: `{"items":[{"id","score"}]}`.

use std::collections::BTreeMap;
use std::io;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use fairaudit_core::blackbox::check_response;
use fairaudit_core::{AuditExample, BlackBoxError, ScoreOracle, ScoreRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSettings {
    pub url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    /// Extra attempts after a transport failure or timeout. At most one.
    #[serde(default)]
    pub retries: u32,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_max_batch() -> usize {
    64
}

impl RemoteSettings {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteSettings {
            url: url.into(),
            timeout_secs: default_timeout(),
            max_batch: default_max_batch(),
            retries: 0,
            token_env: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RemoteConfigError {
    #[error("remote timeout must be positive and finite")]
    Timeout,
    #[error("remote max_batch must be at least 1")]
    MaxBatch,
    #[error("at most one retry is supported")]
    Retries,
    #[error("environment variable {0} is not set")]
    MissingToken(String),
}

#[derive(Serialize)]
struct RequestItem<'a> {
    id: &'a str,
    features: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
}

#[derive(Serialize)]
struct Request<'a> {
    items: Vec<RequestItem<'a>>,
}

#[derive(Serialize, Deserialize)]
struct Response {
    items: Vec<ScoreRecord>,
}

pub struct RemoteScorer {
    agent: ureq::Agent,
    settings: RemoteSettings,
    token: Option<String>,
}

impl RemoteScorer {
    pub fn new(settings: RemoteSettings) -> Result<Self, RemoteConfigError> {
        if !(settings.timeout_secs > 0.0 && settings.timeout_secs.is_finite()) {
            return Err(RemoteConfigError::Timeout);
        }
        if settings.max_batch == 0 {
            return Err(RemoteConfigError::MaxBatch);
        }
        if settings.retries > 1 {
            return Err(RemoteConfigError::Retries);
        }
        let token = match &settings.token_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| RemoteConfigError::MissingToken(var.clone()))?)
            }
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(settings.timeout_secs))
            .build();
        Ok(RemoteScorer {
            agent,
            settings,
            token,
        })
    }

    fn post(&self, chunk: &[&AuditExample]) -> Result<Vec<ScoreRecord>, BlackBoxError> {
        let body = Request {
            items: chunk
                .iter()
                .map(|e| RequestItem {
                    id: &e.id,
                    features: &e.features,
                    text: e.text.as_deref(),
                })
                .collect(),
        };
        let mut req = self.agent.post(&self.settings.url);
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let resp = req.send_json(&body).map_err(transport_error)?;
        let parsed: Response = resp.into_json().map_err(|e| {
            if is_timeout(&e) {
                BlackBoxError::Timeout
            } else {
                protocol(e)
            }
        })?;
        let ids: Vec<&str> = chunk.iter().map(|e| e.id.as_str()).collect();
        check_response(&ids, parsed.items)
    }
}

fn protocol(e: impl std::fmt::Display) -> BlackBoxError {
    BlackBoxError::RemoteProtocol(e.to_string())
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
    )
}

fn transport_error(e: ureq::Error) -> BlackBoxError {
    match e {
        ureq::Error::Status(code, resp) => BlackBoxError::Transport(format!(
            "HTTP {code}: {}",
            resp.into_string().unwrap_or_default()
        )),
        ureq::Error::Transport(t) => {
            let timed_out = std::error::Error::source(&t)
                .and_then(|s| s.downcast_ref::<io::Error>())
                .is_some_and(is_timeout);
            if timed_out {
                BlackBoxError::Timeout
            } else {
                BlackBoxError::Transport(t.to_string())
            }
        }
    }
}

impl ScoreOracle for RemoteScorer {
    fn score_batch(
        &mut self,
        examples: &[&AuditExample],
    ) -> Result<Vec<ScoreRecord>, BlackBoxError> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(self.settings.max_batch) {
            let mut attempt = 0;
            let got = loop {
                match self.post(chunk) {
                    Err(BlackBoxError::Timeout | BlackBoxError::Transport(_))
                        if attempt < self.settings.retries =>
                    {
                        attempt += 1;
                    }
                    other => break other?,
                }
            };
            out.extend(got);
        }
        Ok(out)
    }
}

/// What the stub server saw in one request.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct StubItem {
    pub id: String,
    pub features: Vec<f64>,
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Deserialize)]
struct StubRequest {
    items: Vec<StubItem>,
}

type Handler = dyn Fn(&[StubItem], Option<&str>) -> (u16, String) + Send + Sync;

/// Loopback HTTP scorer for tests and demos. Stops when dropped.
pub struct StubServer {
    url: String,
    server: Arc<tiny_http::Server>,
    worker: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Answers every request from `table`; unknown ids are left out of the
    /// response.
    pub fn echo(table: BTreeMap<String, f64>) -> io::Result<Self> {
        Self::start(move |items, _| {
            let items: Vec<ScoreRecord> = items
                .iter()
                .filter_map(|it| {
                    table.get(&it.id).map(|&score| ScoreRecord {
                        id: it.id.clone(),
                        score,
                    })
                })
                .collect();
            (
                200,
                serde_json::to_string(&Response { items }).expect("records serialise"),
            )
        })
    }

    /// `handler` gets the parsed items and the `Authorization` header and
    /// returns a status and a body.
    pub fn start(
        handler: impl Fn(&[StubItem], Option<&str>) -> (u16, String) + Send + Sync + 'static,
    ) -> io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(io::Error::other)?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| io::Error::other("no port"))?;
        let server = Arc::new(server);
        let handler: Arc<Handler> = Arc::new(handler);
        let srv = Arc::clone(&server);
        let worker = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let mut body = String::new();
                let (code, text) = match req.as_reader().read_to_string(&mut body) {
                    Ok(_) => match serde_json::from_str::<StubRequest>(&body) {
                        Ok(parsed) => {
                            let auth = req
                                .headers()
                                .iter()
                                .find(|h| h.field.equiv("Authorization"))
                                .map(|h| h.value.as_str().to_string());
                            handler(&parsed.items, auth.as_deref())
                        }
                        Err(e) => (400, e.to_string()),
                    },
                    Err(e) => (400, e.to_string()),
                };
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
                    .expect("static header");
                let _ = req.respond(
                    tiny_http::Response::from_string(text)
                        .with_status_code(code)
                        .with_header(header),
                );
            }
        });
        Ok(StubServer {
            url: format!("http://127.0.0.1:{port}/score"),
            server,
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
