//! Client for an external log-probability endpoint, plus a mock server that
//! exposes an [`NGramLm`] over the same wire protocol.
//!
//! Protocol: `POST {endpoint}/step` with `{"prefix": "...", "k": K}`;
//! the reply is `{"top_logprobs": [["tok", lp], ...], "hidden": [...] | null}`
//! with entries sorted by descending log-probability.


use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{LogitVector, NGramLm, StepOutput, TokenId, TokenSource, Vocab, EOS_TOKEN};
use crate::text::{detokenize, tokenize};

/// Logit given to every session token missing from the returned top-k,
/// relative to the smallest returned entry.
pub const FLOOR_OFFSET: f64 = 10.0;
pub const BACKOFF_BASE_MS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    pub top_k: usize,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl RemoteConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        RemoteConfig { endpoint_url: endpoint_url.into(), top_k: 50, timeout_ms: 5_000, max_retries: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout_ms must be positive".into()));
        }
        Ok(())
    }

    fn step_url(&self) -> String {
        format!("{}/step", self.endpoint_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub prefix: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub top_logprobs: Vec<(String, f64)>,
    #[serde(default)]
    pub hidden: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteStep {
    pub top_entries: Vec<(String, f64)>,
    pub hidden_summary: Option<Vec<f64>>,
    pub is_eos_available: bool,
}

/// Validates a response body against the protocol.
pub fn parse_step_response(body: &str, top_k: usize) -> Result<RemoteStep> {
    let resp: StepResponse =
        serde_json::from_str(body).map_err(|e| Error::Protocol(format!("bad response body: {e}")))?;
    let entries = resp.top_logprobs;
    if entries.is_empty() {
        return Err(Error::Protocol("top_logprobs is empty".into()));
    }
    if entries.len() > top_k {
        return Err(Error::Protocol(format!("{} entries returned for k = {top_k}", entries.len())));
    }
    if entries.iter().any(|(_, lp)| !lp.is_finite()) {
        return Err(Error::Protocol("non-finite logprob".into()));
    }
    if entries.windows(2).any(|w| w[0].1 < w[1].1) {
        return Err(Error::Protocol("top_logprobs not sorted by descending logprob".into()));
    }
    if let Some(h) = &resp.hidden {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Protocol("non-finite hidden value".into()));
        }
    }
    let is_eos_available = entries.iter().any(|(t, _)| t == EOS_TOKEN);
    Ok(RemoteStep { top_entries: entries, hidden_summary: resp.hidden, is_eos_available })
}

fn agent_for(cfg: &RemoteConfig) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into()
}

enum Attempt {
    Transient(String),
    Fatal(Error),
}

fn attempt(agent: &ureq::Agent, url: &str, body: &str, top_k: usize) -> std::result::Result<RemoteStep, Attempt> {
    let mut resp = agent
        .post(url)
        .header("Content-Type", "application/json")
        .send(body)
        .map_err(|e| Attempt::Transient(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(|e| Attempt::Transient(e.to_string()))?;
    match status {
        200..=299 => parse_step_response(&text, top_k).map_err(Attempt::Fatal),
        500..=599 => Err(Attempt::Transient(format!("server returned {status}"))),
        _ => Err(Attempt::Fatal(Error::Protocol(format!("unexpected status {status}")))),
    }
}

fn fetch_with(agent: &ureq::Agent, cfg: &RemoteConfig, prefix_text: &str) -> Result<RemoteStep> {
    let body = serde_json::to_string(&StepRequest { prefix: prefix_text.to_string(), k: cfg.top_k })
        .expect("request serializes");
    let url = cfg.step_url();
    let mut last = String::new();
    for retry in 0..=cfg.max_retries {
        if retry > 0 {
            thread::sleep(Duration::from_millis(BACKOFF_BASE_MS << (retry - 1)));
        }
        match attempt(agent, &url, &body, cfg.top_k) {
            Ok(step) => return Ok(step),
            Err(Attempt::Fatal(e)) => return Err(e),
            Err(Attempt::Transient(msg)) => last = msg,
        }
    }
    Err(Error::Connectivity(format!("{url}: {last} (after {} retries)", cfg.max_retries)))
}

/// One request/response exchange, retrying transport failures with
/// exponential backoff (100 ms, 200 ms, 400 ms, ...).
pub fn fetch_step(cfg: &RemoteConfig, prefix_text: &str) -> Result<RemoteStep> {
    cfg.validate()?;
    fetch_with(&agent_for(cfg), cfg, prefix_text)
}

/// Embeds a top-k response into a dense logit vector over `vocab`, adding
/// unseen tokens to it. Tokens outside the response get `min_entry - 10`.
pub fn embed_step(step: &RemoteStep, vocab: &mut Vocab, prefix_len: usize) -> StepOutput {
    let ids: Vec<TokenId> = step.top_entries.iter().map(|(t, _)| vocab.intern(t)).collect();
    let min_entry = step.top_entries.iter().map(|(_, lp)| *lp).fold(f64::INFINITY, f64::min);
    let mut logits = vec![min_entry - FLOOR_OFFSET; vocab.len()];
    for (&id, (_, lp)) in ids.iter().zip(&step.top_entries) {
        logits[id] = *lp;
    }
    StepOutput {
        logits: LogitVector::new(logits).expect("entries are finite"),
        hidden_summary: step.hidden_summary.clone(),
        prefix_len,
    }
}

/// A remote model session. The vocabulary grows as the endpoint returns
/// new tokens; ids stay stable for the life of the session.
pub struct RemoteLm {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    vocab: RwLock<Vocab>,
}

impl RemoteLm {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        cfg.validate()?;
        let agent = agent_for(&cfg);
        Ok(RemoteLm { cfg, agent, vocab: RwLock::new(Vocab::new()) })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.read().unwrap().len()
    }

    fn text_of(&self, ids: &[TokenId]) -> String {
        let vocab = self.vocab.read().unwrap();
        let toks: Vec<&str> = ids
            .iter()
            .filter(|&&id| id != vocab.eos())
            .filter_map(|&id| vocab.token_of(id))
            .collect();
        detokenize(&toks)
    }

    /// Fetches the step for `prefix` and embeds it over the session vocab.
    pub fn remote_next(&self, prefix: &[TokenId], generated_len: usize) -> Result<StepOutput> {
        let text = self.text_of(prefix);
        let step = fetch_with(&self.agent, &self.cfg, &text)?;
        Ok(embed_step(&step, &mut self.vocab.write().unwrap(), generated_len))
    }
}

impl TokenSource for RemoteLm {
    fn eos(&self) -> TokenId {
        self.vocab.read().unwrap().eos()
    }

    fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut vocab = self.vocab.write().unwrap();
        tokenize(text).iter().map(|t| vocab.intern(t)).collect()
    }

    fn decode(&self, ids: &[TokenId]) -> String {
        self.text_of(ids)
    }

    fn next_step(&self, prompt: &[TokenId], generated: &[TokenId]) -> Result<StepOutput> {
        let mut prefix = prompt.to_vec();
        prefix.extend_from_slice(generated);
        self.remote_next(&prefix, generated.len())
    }
}

/// Answers a step request from an n-gram model: log-softmax, top `k`
/// sorted by descending log-probability (ties by id).
pub fn ngram_step_response(lm: &NGramLm, req: &StepRequest) -> StepResponse {
    let prefix = lm.encode(&req.prefix);
    let out = lm.next_logits(&prefix);
    let logits = out.logits.as_slice();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut ids: Vec<TokenId> = (0..logits.len()).collect();
    ids.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    ids.truncate(req.k.max(1));
    let vocab = lm.vocab();
    StepResponse {
        top_logprobs: ids
            .into_iter()
            .map(|id| (vocab.token_of(id).unwrap_or_default().to_string(), logits[id] - log_z))
            .collect(),
        hidden: out.hidden_summary,
    }
}

/// Computes `(status, body)` for a raw request body.
pub type Handler = Arc<dyn Fn(&str) -> (u16, String) + Send + Sync>;

/// Handler serving `lm` over the step protocol.
pub fn ngram_handler(lm: Arc<NGramLm>) -> Handler {
    Arc::new(move |body: &str| match serde_json::from_str::<StepRequest>(body) {
        Ok(req) => (200, serde_json::to_string(&ngram_step_response(&lm, &req)).expect("response serializes")),
        Err(e) => (400, format!("{{\"error\": {:?}}}", e.to_string())),
    })
}

/// In-process HTTP server for the step protocol. Stops on drop.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves `handler`
    /// on `POST /step`.
    pub fn start(addr: &str, handler: Handler) -> Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(|e| Error::Connectivity(format!("bind {addr}: {e}")))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Connectivity("mock server has no IP address".into()))?;
        let server = Arc::new(server);
        let worker = {
            let server = Arc::clone(&server);
            thread::spawn(move || {
                for mut request in server.incoming_requests() {
                    let mut body = String::new();
                    let (status, reply) = if request.method() != &tiny_http::Method::Post || request.url() != "/step" {
                        (404, "{\"error\": \"not found\"}".to_string())
                    } else if request.as_reader().read_to_string(&mut body).is_err() {
                        (400, "{\"error\": \"unreadable body\"}".to_string())
                    } else {
                        handler(&body)
                    };
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
                    let response = tiny_http::Response::from_string(reply).with_status_code(status).with_header(header);
                    let _ = request.respond(response);
                }
            })
        };
        Ok(MockServer { server, addr, worker: Some(worker) })
    }

    pub fn serve_ngram(addr: &str, lm: Arc<NGramLm>) -> Result<Self> {
        Self::start(addr, ngram_handler(lm))
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server is stopped from elsewhere.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
