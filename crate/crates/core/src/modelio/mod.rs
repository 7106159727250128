//! Clients for the four model roles and the cascade composer.
//!
//! Every backend speaks the same JSON bodies: one request object in, one
//! `{"ok":true,"payload":...}` or `{"ok":false,"error":...}` reply out. The
//! stub backend answers from a lookup table, the subprocess backend uses one
//! JSON object per line over stdin/stdout, and the HTTP backend POSTs to
//! `/invoke`.

mod http;
mod stub;
mod subprocess;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use stub::{StubEntry, StubMap};

use crate::lang::{SignLang, SpokenLang};
use crate::types::{MotionTokenSequence, TokenTriple};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("endpoint timeout")]
    Timeout,
    #[error("no mapping for input {0}")]
    NoMapping(String),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request for role {request} sent to a {endpoint} endpoint")]
    RoleMismatch { endpoint: Role, request: Role },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid endpoint: {0}")]
    Config(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: Role,
        #[source]
        source: Box<ModelError>,
    },
}

impl ModelError {
    fn in_stage(self, stage: Role) -> Self {
        ModelError::Stage { stage, source: Box::new(self) }
    }
}

/// First 200 characters of a raw reply, for error messages.
pub(crate) fn excerpt(raw: &str) -> String {
    let mut s: String = raw.chars().take(200).collect();
    if raw.chars().count() > 200 {
        s.push('…');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Mt,
    T2s,
    S2t,
    S2s,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Mt => "mt",
            Role::T2s => "t2s",
            Role::S2t => "s2t",
            Role::S2s => "s2s",
        }
    }

    fn returns_text(self) -> bool {
        matches!(self, Role::Mt | Role::S2t)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mt" => Ok(Role::Mt),
            "t2s" => Ok(Role::T2s),
            "s2t" => Ok(Role::S2t),
            "s2s" => Ok(Role::S2s),
            other => Err(ModelError::Config(format!("unknown role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Stub { map_file: PathBuf },
    Subprocess { cmd: String },
    Http { url: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub role: Role,
    pub backend: Backend,
    pub timeout_ms: u64,
}

impl EndpointSpec {
    /// Parses the compact command-line form: `stub:PATH`, `subprocess:CMD`
    /// (alias `cmd:CMD`) or an `http://` / `https://` base URL.
    pub fn parse(role: Role, spec: &str, timeout_ms: u64) -> Result<Self, ModelError> {
        if timeout_ms == 0 {
            return Err(ModelError::Config("timeout must be positive".into()));
        }
        let backend = if let Some(path) = spec.strip_prefix("stub:") {
            Backend::Stub { map_file: PathBuf::from(path) }
        } else if let Some(cmd) = spec.strip_prefix("subprocess:").or_else(|| spec.strip_prefix("cmd:")) {
            Backend::Subprocess { cmd: cmd.to_string() }
        } else if spec.starts_with("http://") || spec.starts_with("https://") {
            Backend::Http { url: spec.to_string() }
        } else {
            return Err(ModelError::Config(format!(
                "endpoint `{spec}` must start with stub:, subprocess:, cmd:, http:// or https://"
            )));
        };
        Ok(Self { role, backend, timeout_ms })
    }
}

/// Role-typed request. Serializes to the wire body, e.g.
/// `{"task":"mt","text":"hello","src":"en","tgt":"zh"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Request {
    Mt { text: String, src: SpokenLang, tgt: SpokenLang },
    T2s { text: String, sign_lang: SignLang },
    S2t { tokens: Vec<TokenTriple>, sign_lang: SignLang },
    S2s { tokens: Vec<TokenTriple>, src: SignLang, tgt: SignLang },
}

impl Request {
    pub fn role(&self) -> Role {
        match self {
            Request::Mt { .. } => Role::Mt,
            Request::T2s { .. } => Role::T2s,
            Request::S2t { .. } => Role::S2t,
            Request::S2s { .. } => Role::S2s,
        }
    }

    /// The part of the request a stub table is keyed on.
    pub fn stub_key(&self) -> Value {
        match self {
            Request::Mt { text, .. } | Request::T2s { text, .. } => Value::String(text.clone()),
            Request::S2t { tokens, .. } | Request::S2s { tokens, .. } => {
                serde_json::to_value(tokens).expect("token triples serialize")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Text(String),
    Tokens(Vec<TokenTriple>),
}

impl Payload {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Payload::Text(t) => Some(t),
            Payload::Tokens(_) => None,
        }
    }

    pub fn as_tokens(&self) -> Option<&[TokenTriple]> {
        match self {
            Payload::Tokens(t) => Some(t),
            Payload::Text(_) => None,
        }
    }

    fn from_value(role: Role, value: Value) -> Result<Self, ModelError> {
        let raw = value.to_string();
        if role.returns_text() {
            match value {
                Value::String(s) => Ok(Payload::Text(s)),
                _ => Err(ModelError::Malformed(format!("expected a text payload, got {}", excerpt(&raw)))),
            }
        } else {
            let tokens: Vec<TokenTriple> = serde_json::from_value(value)
                .map_err(|_| ModelError::Malformed(format!("expected token triples, got {}", excerpt(&raw))))?;
            if tokens.is_empty() {
                return Err(ModelError::Malformed("empty token sequence".into()));
            }
            Ok(Payload::Tokens(tokens))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub stage: Role,
    pub latency_ms: f64,
}

/// Intermediate text kept from a composed call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intermediate {
    pub stage: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedResult {
    pub payload: Payload,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_latencies: Option<Vec<StageLatency>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intermediates: Vec<Intermediate>,
}

/// Parses a wire reply into the payload for `role`.
pub(crate) fn parse_reply(role: Role, raw: &str) -> Result<Payload, ModelError> {
    let value: Value = serde_json::from_str(raw.trim()).map_err(|_| ModelError::Malformed(excerpt(raw)))?;
    match value.get("ok").and_then(Value::as_bool) {
        Some(true) => {
            let payload = value.get("payload").cloned().ok_or_else(|| ModelError::Malformed(excerpt(raw)))?;
            Payload::from_value(role, payload)
        }
        Some(false) => Err(ModelError::Backend(
            value.get("error").map(|e| e.as_str().map(str::to_string).unwrap_or_else(|| e.to_string())).unwrap_or_default(),
        )),
        None => Err(ModelError::Malformed(excerpt(raw))),
    }
}

enum Transport {
    Stub(stub::StubBackend),
    Subprocess(Mutex<subprocess::SubprocessBackend>),
    Http(http::HttpBackend),
}

/// A connected endpoint. Safe to share across threads; a subprocess endpoint
/// keeps one request in flight at a time.
pub struct Client {
    role: Role,
    timeout: Duration,
    transport: Transport,
    calls: AtomicUsize,
}

impl fmt::Debug for Client {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Client")
            .field("role", &self.role)
            .field("timeout", &self.timeout)
            .field("calls", &self.calls())
            .finish()
    }
}

impl Client {
    /// Loads the stub table, spawns the subprocess or prepares the HTTP agent.
    pub fn connect(spec: &EndpointSpec) -> Result<Self, ModelError> {
        if spec.timeout_ms == 0 {
            return Err(ModelError::Config("timeout must be positive".into()));
        }
        let transport = match &spec.backend {
            Backend::Stub { map_file } => Transport::Stub(stub::StubBackend::new(StubMap::load(map_file)?)),
            Backend::Subprocess { cmd } => {
                Transport::Subprocess(Mutex::new(subprocess::SubprocessBackend::spawn(cmd)?))
            }
            Backend::Http { url } => Transport::Http(http::HttpBackend::new(url, Duration::from_millis(spec.timeout_ms))),
        };
        Ok(Self::with_transport(spec.role, spec.timeout_ms, transport))
    }

    /// An in-memory stub endpoint.
    pub fn stub(role: Role, map: StubMap, timeout_ms: u64) -> Self {
        Self::with_transport(role, timeout_ms.max(1), Transport::Stub(stub::StubBackend::new(map)))
    }

    fn with_transport(role: Role, timeout_ms: u64, transport: Transport) -> Self {
        Self { role, timeout: Duration::from_millis(timeout_ms), transport, calls: AtomicUsize::new(0) }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Number of `invoke` calls made so far, including failed ones.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn invoke(&self, request: &Request) -> Result<TimedResult, ModelError> {
        if request.role() != self.role {
            return Err(ModelError::RoleMismatch { endpoint: self.role, request: request.role() });
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let (payload, latency_ms) = match &self.transport {
            Transport::Stub(stub) => {
                let key = request.stub_key();
                let start = Instant::now();
                let value = stub.call(&key, self.timeout)?;
                let latency = elapsed_ms(start);
                (Payload::from_value(self.role, value)?, latency)
            }
            Transport::Subprocess(proc) => {
                let line = serde_json::to_string(request).map_err(|e| ModelError::InvalidRequest(e.to_string()))?;
                let mut proc = proc.lock().unwrap_or_else(|p| p.into_inner());
                let start = Instant::now();
                let raw = proc.call(&line, self.timeout)?;
                let latency = elapsed_ms(start);
                (parse_reply(self.role, &raw)?, latency)
            }
            Transport::Http(http) => {
                let body = serde_json::to_string(request).map_err(|e| ModelError::InvalidRequest(e.to_string()))?;
                let start = Instant::now();
                let raw = http.call(body)?;
                let latency = elapsed_ms(start);
                (parse_reply(self.role, &raw)?, latency)
            }
        };
        Ok(TimedResult { payload, latency_ms, stage_latencies: None, intermediates: Vec::new() })
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

fn text_of(result: &TimedResult) -> String {
    result.payload.as_text().expect("role validated as text").to_string()
}

fn tokens_of(result: &TimedResult) -> Vec<TokenTriple> {
    result.payload.as_tokens().expect("role validated as tokens").to_vec()
}

/// Text-to-sign generation with one fixed decoding setup.
///
/// The back-translation builder and the synthetic-source evaluation mode take
/// the same `Synthesizer`, so training sources and evaluation sources are
/// produced by one endpoint configuration.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    client: Arc<Client>,
    codebook_id: String,
}

impl Synthesizer {
    pub fn new(client: Arc<Client>, codebook_id: impl Into<String>) -> Result<Self, ModelError> {
        if client.role() != Role::T2s {
            return Err(ModelError::Config(format!("synthesizer needs a t2s endpoint, got {}", client.role())));
        }
        Ok(Self { client, codebook_id: codebook_id.into() })
    }

    pub fn client(&self) -> &Client {
        &self.client
    }

    pub fn codebook_id(&self) -> &str {
        &self.codebook_id
    }

    /// Generates a synthetic token sequence for `text` in `sign_lang`.
    pub fn synthesize(
        &self,
        id: impl Into<String>,
        text: &str,
        sign_lang: SignLang,
    ) -> Result<(MotionTokenSequence, TimedResult), ModelError> {
        let result = self.client.invoke(&Request::T2s { text: text.to_string(), sign_lang })?;
        let seq = MotionTokenSequence {
            id: id.into(),
            sign_lang,
            synthetic: true,
            codebook_id: self.codebook_id.clone(),
            tokens: tokens_of(&result),
        };
        Ok((seq, result))
    }
}

/// Direct sign-to-sign call.
pub fn direct_s2s(s2s: &Client, source: &MotionTokenSequence, tgt: SignLang) -> Result<TimedResult, ModelError> {
    if source.sign_lang == tgt {
        return Err(ModelError::InvalidRequest(format!("source is already {tgt}")));
    }
    s2s.invoke(&Request::S2s { tokens: source.tokens.clone(), src: source.sign_lang, tgt })
}

/// Sign-to-text, spoken-language MT, then text-to-sign.
///
/// Stage latencies are recorded in call order; the total is measured around
/// the whole chain.
pub fn cascade_s2s(
    s2t: &Client,
    mt: &Client,
    t2s: &Client,
    source: &MotionTokenSequence,
    tgt: SignLang,
) -> Result<TimedResult, ModelError> {
    if source.sign_lang == tgt {
        return Err(ModelError::InvalidRequest(format!("source is already {tgt}")));
    }
    let start = Instant::now();
    let recognized = s2t
        .invoke(&Request::S2t { tokens: source.tokens.clone(), sign_lang: source.sign_lang })
        .map_err(|e| e.in_stage(Role::S2t))?;
    let source_text = text_of(&recognized);
    let translated = mt
        .invoke(&Request::Mt { text: source_text.clone(), src: source.sign_lang.partner(), tgt: tgt.partner() })
        .map_err(|e| e.in_stage(Role::Mt))?;
    let target_text = text_of(&translated);
    let generated = t2s
        .invoke(&Request::T2s { text: target_text.clone(), sign_lang: tgt })
        .map_err(|e| e.in_stage(Role::T2s))?;
    let latency_ms = elapsed_ms(start);
    Ok(TimedResult {
        payload: generated.payload,
        latency_ms,
        stage_latencies: Some(vec![
            StageLatency { stage: Role::S2t, latency_ms: recognized.latency_ms },
            StageLatency { stage: Role::Mt, latency_ms: translated.latency_ms },
            StageLatency { stage: Role::T2s, latency_ms: generated.latency_ms },
        ]),
        intermediates: vec![
            Intermediate { stage: Role::S2t, text: source_text },
            Intermediate { stage: Role::Mt, text: target_text },
        ],
    })
}
