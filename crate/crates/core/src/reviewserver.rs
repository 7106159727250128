//! JSON-over-HTTP backend for the two-annotator screening UI.
//!
//! Routes:
//!
//! | method | path                                | reply |
//! |--------|-------------------------------------|-------|
//! | GET    | `/session/{id}/queue?annotator=A`   | A's undecided pairs |
//! | GET    | `/pair/{pair_id}[?annotator=A]`     | texts, scores, clip ids (and A's own decision) |
//! | POST   | `/decision`                         | `{"annotator","pair_id","decision"}` |
//! | GET    | `/progress`                         | decided / total per annotator |
//! | GET    | `/export`                           | strict subset as JSON lines, or 409 with the undecided list |
//!
//! `/progress`, `/pair` and `/export` are also served under `/session/{id}/`.
//! There is no authentication: the annotator id in the request is trusted.
//! Run it on localhost or a trusted network only.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::read_jsonl;
use crate::error::{Error, Result};
use crate::types::{CandidatePair, Decision, TextUtterance};
use crate::verify::{DecisionRecord, ScreeningSession, VerifyError};

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: String,
}

impl Reply {
    fn json(status: u16, value: Value) -> Self {
        Self { status, content_type: "application/json", body: value.to_string() }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self::json(status, json!({ "error": message.into() }))
    }
}

/// Body of `POST /decision`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    annotator: String,
    pair_id: String,
    decision: Decision,
}

/// Queue entry; carries no decision of either annotator.
#[derive(Debug, Serialize)]
struct QueueItem<'a> {
    pair_id: &'a str,
    src_text: &'a TextUtterance,
    tgt_text: &'a TextUtterance,
    llm_rating: Option<u8>,
    cosine: Option<f64>,
}

impl<'a> From<&'a CandidatePair> for QueueItem<'a> {
    fn from(p: &'a CandidatePair) -> Self {
        Self { pair_id: &p.pair_id, src_text: &p.src_text, tgt_text: &p.tgt_text, llm_rating: p.llm_rating, cosine: p.cosine }
    }
}

struct State {
    session: ScreeningSession,
    log: Option<(PathBuf, File)>,
}

/// A screening session plus its append-only decisions file.
pub struct ReviewServer {
    session_id: String,
    state: Mutex<State>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl ReviewServer {
    /// Opens a session. An existing decisions file is replayed first, so a
    /// restarted server resumes where it stopped.
    pub fn open(
        session_id: impl Into<String>,
        pool: Vec<CandidatePair>,
        annotators: [String; 2],
        decisions: Option<&Path>,
    ) -> Result<Self> {
        let session = match decisions {
            Some(path) if path.exists() => {
                ScreeningSession::replay(pool, annotators, read_jsonl::<DecisionRecord>(path)?)?
            }
            _ => ScreeningSession::new(pool, annotators, now_ms())?,
        };
        let log = match decisions {
            Some(path) => {
                let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
                Some((path.to_path_buf(), file))
            }
            None => None,
        };
        Ok(Self { session_id: session_id.into(), state: Mutex::new(State { session, log }) })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Current strict subset, as `verify finalize` would write it.
    pub fn export(&self) -> std::result::Result<String, Vec<String>> {
        let state = self.lock();
        match state.session.finalize_jsonl() {
            Ok(s) => Ok(s),
            Err(_) => Err(state.session.undecided()),
        }
    }

    /// Routes one request. Pure apart from the decision store.
    pub fn handle(&self, method: &str, url: &str, body: &str) -> Reply {
        let (path, query) = url.split_once('?').unwrap_or((url, ""));
        let params: Vec<(String, String)> = form_urlencoded::parse(query.as_bytes()).into_owned().collect();
        let param = |k: &str| params.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let segments: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();

        let rest: &[&str] = match segments.as_slice() {
            ["session", id, rest @ ..] => {
                if *id != self.session_id {
                    return Reply::error(404, format!("unknown session `{id}`"));
                }
                rest
            }
            other => other,
        };
        match (method, rest) {
            ("GET", ["queue"]) => self.queue(param("annotator")),
            ("GET", ["pair", pid]) => self.pair(pid, param("annotator")),
            ("POST", ["decision"]) => self.decide(body),
            ("GET", ["progress"]) => self.progress(),
            ("GET", ["export"]) => match self.export() {
                Ok(jsonl) => Reply { status: 200, content_type: "application/x-ndjson", body: jsonl },
                Err(undecided) => Reply::json(409, json!({ "status": "incomplete", "undecided": undecided })),
            },
            (_, ["queue"] | ["pair", _] | ["decision"] | ["progress"] | ["export"]) => {
                Reply::error(405, format!("method {method} not allowed on {path}"))
            }
            _ => Reply::error(404, format!("no route for {path}")),
        }
    }

    fn queue(&self, annotator: Option<&str>) -> Reply {
        let Some(annotator) = annotator.filter(|a| !a.is_empty()) else {
            return Reply::error(400, "missing `annotator` query parameter");
        };
        let state = self.lock();
        match state.session.queue(annotator) {
            Ok(pairs) => {
                let total = state.session.pool().len();
                let items: Vec<QueueItem> = pairs.into_iter().map(QueueItem::from).collect();
                Reply::json(
                    200,
                    json!({
                        "session_id": self.session_id,
                        "annotator": annotator,
                        "decided": total - items.len(),
                        "total": total,
                        "pairs": items,
                    }),
                )
            }
            Err(e) => verify_reply(&e),
        }
    }

    fn pair(&self, pair_id: &str, annotator: Option<&str>) -> Reply {
        let state = self.lock();
        let Some(p) = state.session.pair(pair_id) else {
            return Reply::error(404, format!("unknown pair `{pair_id}`"));
        };
        let mut value = json!({
            "pair_id": p.pair_id,
            "src_text": p.src_text,
            "tgt_text": p.tgt_text,
            "llm_rating": p.llm_rating,
            "cosine": p.cosine,
            "src_clips": p.src_clips,
            "tgt_clips": p.tgt_clips,
        });
        if let Some(a) = annotator {
            if !state.session.is_registered(a) {
                return verify_reply(&VerifyError::UnknownAnnotator(a.to_string()));
            }
            value["decision"] = json!(state.session.decision(a, pair_id));
        }
        Reply::json(200, value)
    }

    fn decide(&self, body: &str) -> Reply {
        let req: DecisionBody = match serde_json::from_str(body) {
            Ok(r) => r,
            Err(e) => return Reply::error(400, format!("malformed decision: {e}")),
        };
        let mut state = self.lock();
        if !state.session.is_registered(&req.annotator) {
            return verify_reply(&VerifyError::UnknownAnnotator(req.annotator));
        }
        if state.session.pair(&req.pair_id).is_none() {
            return verify_reply(&VerifyError::NotCandidate(req.pair_id));
        }
        let record = DecisionRecord {
            pair_id: req.pair_id,
            annotator: req.annotator,
            decision: req.decision,
            ts: now_ms().max(state.session.updated_ms()),
        };
        // persist before acknowledging
        if let Some((path, file)) = state.log.as_mut() {
            let line = serde_json::to_string(&record).expect("decision record serializes");
            let written = file
                .write_all(line.as_bytes())
                .and_then(|_| file.write_all(b"\n"))
                .and_then(|_| file.sync_data());
            if let Err(e) = written {
                return Reply::error(500, format!("cannot persist decision to {}: {e}", path.display()));
            }
        }
        match state.session.record_decision(&record.annotator, &record.pair_id, record.decision, record.ts) {
            Ok(r) => Reply::json(200, json!({ "ok": true, "pair_id": r.pair_id, "annotator": r.annotator, "decision": r.decision })),
            Err(e) => verify_reply(&e),
        }
    }

    fn progress(&self) -> Reply {
        let state = self.lock();
        let total = state.session.pool().len();
        let mut annotators = serde_json::Map::new();
        for a in state.session.annotators() {
            let decided = state.session.decided_count(a).unwrap_or(0);
            annotators.insert(a.clone(), json!({ "decided": decided, "total": total }));
        }
        Reply::json(
            200,
            json!({
                "session_id": self.session_id,
                "total": total,
                "annotators": annotators,
                "complete": state.session.undecided().is_empty(),
            }),
        )
    }
}

fn verify_reply(e: &VerifyError) -> Reply {
    let status = match e {
        VerifyError::UnknownAnnotator(_) => 409,
        VerifyError::NotCandidate(_) => 404,
        _ => 400,
    };
    Reply::error(status, e.to_string())
}

/// A running HTTP listener.
pub struct ServeHandle {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl ServeHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the listener stops.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

/// Starts serving on `addr` (port 0 picks a free port).
pub fn serve(review: Arc<ReviewServer>, addr: &str, workers: usize) -> Result<ServeHandle> {
    let server = Arc::new(tiny_http::Server::http(addr).map_err(|e| Error::Data(format!("cannot listen on {addr}: {e}")))?);
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Data(format!("{addr} is not an IP address")))?;
    let workers = (0..workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let review = Arc::clone(&review);
            thread::spawn(move || {
                while let Ok(mut request) = server.recv() {
                    let mut body = String::new();
                    let reply = match request.as_reader().read_to_string(&mut body) {
                        Ok(_) => review.handle(request.method().as_str(), request.url(), &body),
                        Err(e) => Reply::error(400, format!("unreadable body: {e}")),
                    };
                    let header = tiny_http::Header::from_bytes("Content-Type", reply.content_type)
                        .expect("static header is valid");
                    let response = tiny_http::Response::from_string(reply.body)
                        .with_status_code(reply.status)
                        .with_header(header);
                    let _ = request.respond(response);
                }
            })
        })
        .collect();
    Ok(ServeHandle { server, addr: bound, workers })
}
