use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Distribution, Policy, PolicyContext, PolicyError};
use crate::align::TokenId;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub vocab_size: usize,
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_in_flight: usize,
    pub max_context: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, vocab_size: usize) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            vocab_size,
            timeout_ms: 30_000,
            retries: 2,
            max_in_flight: 4,
            max_context: 8192,
        }
    }
}

#[derive(Serialize)]
struct LogitRequest<'a> {
    tokens: &'a [TokenId],
    model: &'a str,
}

#[derive(Deserialize)]
struct LogitResponse {
    logprobs: Vec<f64>,
}

struct Gate {
    busy: Mutex<usize>,
    cv: Condvar,
    limit: usize,
}

impl Gate {
    fn enter(&self) {
        let mut b = self.busy.lock().expect("gate lock");
        while *b >= self.limit {
            b = self.cv.wait(b).expect("gate wait");
        }
        *b += 1;
    }

    fn leave(&self) {
        *self.busy.lock().expect("gate lock") -= 1;
        self.cv.notify_one();
    }
}

/// Client for a logit server: `POST /v1/logits` with
/// `{"tokens": [...], "model": "..."}`, answered by `{"logprobs": [...]}`.
pub struct RemotePolicy {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemotePolicy {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        let gate = Gate { busy: Mutex::new(0), cv: Condvar::new(), limit: cfg.max_in_flight.max(1) };
        RemotePolicy { cfg, agent, gate }
    }

    fn request(&self, tokens: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        let url = format!("{}/v1/logits", self.cfg.endpoint.trim_end_matches('/'));
        let mut last = String::new();
        for _ in 0..=self.cfg.retries {
            let body = LogitRequest { tokens, model: &self.cfg.model };
            match self.agent.post(&url).send_json(&body) {
                Ok(mut resp) => match resp.body_mut().read_json::<LogitResponse>() {
                    Ok(r) => return Ok(r.logprobs),
                    Err(e) => last = e.to_string(),
                },
                Err(e) => last = e.to_string(),
            }
        }
        Err(PolicyError::Remote(last))
    }
}

impl Policy for RemotePolicy {
    fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }

    fn next_distribution(&self, ctx: &PolicyContext) -> Result<Distribution, PolicyError> {
        let mut tokens = ctx.prompt.to_vec();
        tokens.extend_from_slice(ctx.generated);
        if tokens.len() > self.cfg.max_context {
            return Err(PolicyError::ContextTooLong { len: tokens.len(), max: self.cfg.max_context });
        }
        self.gate.enter();
        let r = self.request(&tokens);
        self.gate.leave();
        let lps = r?;
        if lps.len() != self.cfg.vocab_size || lps.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(PolicyError::Remote(format!(
                "expected {} finite log-probabilities, got {}",
                self.cfg.vocab_size,
                lps.len()
            )));
        }
        Ok(Distribution::from_logits(lps))
    }
}

type Responder = dyn Fn(&[TokenId]) -> Vec<f64> + Send + Sync;

/// A loopback logit server for tests and offline runs.
pub struct StubServer {
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
    url: String,
}

impl StubServer {
    /// Serves the same log-probabilities for every request.
    pub fn fixed(logprobs: Vec<f64>) -> std::io::Result<StubServer> {
        Self::start(Arc::new(move |_: &[TokenId]| logprobs.clone()))
    }

    pub fn start(respond: Arc<Responder>) -> std::io::Result<StubServer> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server.server_addr().to_ip().ok_or_else(|| std::io::Error::other("no ip address"))?;
        let server = Arc::new(server);
        let srv = server.clone();
        let handle = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let mut body = String::new();
                let reply = match req.as_reader().read_to_string(&mut body) {
                    Ok(_) => match serde_json::from_str::<serde_json::Value>(&body) {
                        Ok(v) if req.url() == "/v1/logits" => {
                            let tokens: Vec<TokenId> = v["tokens"]
                                .as_array()
                                .map(|a| a.iter().filter_map(|x| x.as_u64().map(|x| x as TokenId)).collect())
                                .unwrap_or_default();
                            let lps = respond(&tokens);
                            tiny_http::Response::from_string(serde_json::json!({ "logprobs": lps }).to_string())
                        }
                        Ok(_) => tiny_http::Response::from_string("not found").with_status_code(404),
                        Err(e) => tiny_http::Response::from_string(e.to_string()).with_status_code(400),
                    },
                    Err(e) => tiny_http::Response::from_string(e.to_string()).with_status_code(400),
                };
                let _ = req.respond(reply);
            }
        });
        Ok(StubServer { server, handle: Some(handle), url: format!("http://{addr}") })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
