//! JSON-over-HTTP API: upload, diagnose, chat sessions and evaluation runs.
//!
//! [`Api::handle`] is transport independent; [`HttpServer`] puts it behind
//! `tiny_http`. Every response is either a documented success body or an
//! [`ApiError`].

use std::collections::HashMap;
use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use base64::Engine as _;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::DEFAULT_MAX_UPLOAD_BYTES;
use crate::dialogue::{chat_turn, ChatSession, DialogueError, DialogueTurn, PromptTemplate, SessionStore};
use crate::inference::{Backend, InferenceError};
use crate::llm::LlmClient;
use crate::metrics::{evaluate_files, EvalError, MetricsTable};
use crate::pipeline::{run_diagnosis, DiagnosisFindings, FundusCase, PipelineConfig, PipelineError};
use crate::report::{render_report, DiagnosticReport, ReportError, ReportTemplate};
use crate::store::JsonlLog;

/// The closed set of error kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    MissingField,
    InvalidJson,
    InvalidField,
    EmptyInput,
    NotFound,
    MethodNotAllowed,
    Conflict,
    PayloadTooLarge,
    Unprocessable,
    BackendUnavailable,
    Internal,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 11] = [
        ErrorKind::MissingField,
        ErrorKind::InvalidJson,
        ErrorKind::InvalidField,
        ErrorKind::EmptyInput,
        ErrorKind::NotFound,
        ErrorKind::MethodNotAllowed,
        ErrorKind::Conflict,
        ErrorKind::PayloadTooLarge,
        ErrorKind::Unprocessable,
        ErrorKind::BackendUnavailable,
        ErrorKind::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::MissingField => "missing-field",
            ErrorKind::InvalidJson => "invalid-json",
            ErrorKind::InvalidField => "invalid-field",
            ErrorKind::EmptyInput => "empty-input",
            ErrorKind::NotFound => "not-found",
            ErrorKind::MethodNotAllowed => "method-not-allowed",
            ErrorKind::Conflict => "conflict",
            ErrorKind::PayloadTooLarge => "payload-too-large",
            ErrorKind::Unprocessable => "unprocessable",
            ErrorKind::BackendUnavailable => "backend-unavailable",
            ErrorKind::Internal => "internal",
        }
    }

    pub fn status(self) -> u16 {
        match self {
            ErrorKind::MissingField | ErrorKind::InvalidJson | ErrorKind::InvalidField | ErrorKind::EmptyInput => 400,
            ErrorKind::NotFound => 404,
            ErrorKind::MethodNotAllowed => 405,
            ErrorKind::Conflict => 409,
            ErrorKind::PayloadTooLarge => 413,
            ErrorKind::Unprocessable => 422,
            ErrorKind::BackendUnavailable => 502,
            ErrorKind::Internal => 500,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Error body. `detail` starts with the kind, e.g. `missing-field: width`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{detail}")]
pub struct ApiError {
    pub status: u16,
    pub kind: String,
    pub detail: String,
}

impl ApiError {
    pub fn new(kind: ErrorKind, msg: impl std::fmt::Display) -> Self {
        Self {
            status: kind.status(),
            kind: kind.as_str().to_string(),
            detail: format!("{}: {msg}", kind.as_str()),
        }
    }

    /// True when `kind` is in the closed set and `status` matches it.
    pub fn is_documented(&self) -> bool {
        ErrorKind::parse(&self.kind).is_some_and(|k| k.status() == self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiRequest {
    pub method: String,
    /// Path including any query string.
    pub path: String,
    pub body: Vec<u8>,
}

impl ApiRequest {
    pub fn new(method: &str, path: &str, body: impl Into<Vec<u8>>) -> Self {
        Self {
            method: method.to_string(),
            path: path.to_string(),
            body: body.into(),
        }
    }

    pub fn json(method: &str, path: &str, body: &Value) -> Self {
        Self::new(method, path, body.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl ApiResponse {
    fn bytes(status: u16, body: Vec<u8>) -> Self {
        Self {
            status,
            headers: vec![("content-type".into(), "application/json".into())],
            body,
        }
    }

    fn json(status: u16, value: &impl Serialize) -> Self {
        Self::bytes(status, serde_json::to_vec(value).expect("response bodies serialize"))
    }

    fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn body_json(&self) -> Option<Value> {
        serde_json::from_slice(&self.body).ok()
    }

    pub fn error(&self) -> Option<ApiError> {
        if self.status < 400 {
            return None;
        }
        serde_json::from_slice(&self.body).ok()
    }
}

impl From<ApiError> for ApiResponse {
    fn from(e: ApiError) -> Self {
        ApiResponse::json(e.status, &e)
    }
}

#[derive(Debug, Clone)]
pub struct ApiOptions {
    pub pipeline: PipelineConfig,
    pub report_template: ReportTemplate,
    pub prompt_template: PromptTemplate,
    /// Limit on decoded image bytes.
    pub max_upload_bytes: usize,
    /// Persistence root; in-memory when `None`.
    pub data_dir: Option<PathBuf>,
}

impl Default for ApiOptions {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            report_template: ReportTemplate::default_template(),
            prompt_template: PromptTemplate::default(),
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            data_dir: None,
        }
    }
}

/// Largest request body accepted for a given image limit: the base64
/// expansion plus 64 KiB for the JSON envelope.
pub fn body_limit(max_upload_bytes: usize) -> usize {
    max_upload_bytes.div_ceil(3) * 4 + 64 * 1024
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiagnosisRecord {
    case_id: String,
    findings: DiagnosisFindings,
    report: DiagnosticReport,
}

#[derive(Serialize)]
struct DiagnoseBody<'a> {
    findings: &'a DiagnosisFindings,
    report: &'a DiagnosticReport,
}

struct Cached {
    body: Arc<Vec<u8>>,
    report: DiagnosticReport,
}

#[derive(Default)]
struct State {
    cases: HashMap<String, FundusCase>,
    diagnoses: HashMap<String, Cached>,
    sessions: HashMap<String, Arc<Mutex<ChatSession>>>,
}

struct Persistence {
    root: PathBuf,
    cases: JsonlLog<FundusCase>,
    diagnoses: JsonlLog<DiagnosisRecord>,
    sessions: SessionStore,
}

pub struct Api {
    backend: Arc<dyn Backend>,
    llm: Arc<dyn LlmClient>,
    opts: ApiOptions,
    state: Mutex<State>,
    store: Option<Persistence>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(ErrorKind::Internal, e)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || b == b'.')
        && !id.starts_with('.')
}

fn diagnose_body(findings: &DiagnosisFindings, report: &DiagnosticReport) -> Vec<u8> {
    serde_json::to_vec(&DiagnoseBody { findings, report }).expect("findings serialize")
}

impl Api {
    /// Builds the API, replaying persisted state when `opts.data_dir` is set.
    pub fn new(backend: Arc<dyn Backend>, llm: Arc<dyn LlmClient>, opts: ApiOptions) -> Result<Self, ApiError> {
        let mut state = State::default();
        let store = match &opts.data_dir {
            None => None,
            Some(root) => {
                std::fs::create_dir_all(root.join("images")).map_err(internal)?;
                let p = Persistence {
                    root: root.clone(),
                    cases: JsonlLog::new(root.join("cases.jsonl")),
                    diagnoses: JsonlLog::new(root.join("diagnoses.jsonl")),
                    sessions: SessionStore::new(root.join("sessions")),
                };
                for case in p.cases.read_all().map_err(internal)? {
                    state.cases.insert(case.case_id.clone(), case);
                }
                for rec in p.diagnoses.read_all().map_err(internal)? {
                    let body = diagnose_body(&rec.findings, &rec.report);
                    state.diagnoses.insert(
                        rec.case_id,
                        Cached {
                            body: Arc::new(body),
                            report: rec.report,
                        },
                    );
                }
                for (id, s) in p.sessions.load_all().map_err(internal)? {
                    state.sessions.insert(id, Arc::new(Mutex::new(s)));
                }
                Some(p)
            }
        };
        Ok(Self {
            backend,
            llm,
            opts,
            state: Mutex::new(state),
            store,
        })
    }

    pub fn options(&self) -> &ApiOptions {
        &self.opts
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        match self.route(req) {
            Ok(r) => r,
            Err(e) => {
                tracing::debug!(method = %req.method, path = %req.path, detail = %e.detail, "api error");
                e.into()
            }
        }
    }

    fn route(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        if req.body.len() > body_limit(self.opts.max_upload_bytes) {
            return Err(ApiError::new(
                ErrorKind::PayloadTooLarge,
                format!("request body of {} bytes exceeds the limit", req.body.len()),
            ));
        }
        let (path, query) = req.path.split_once('?').unwrap_or((&req.path, ""));
        let segs: Vec<&str> = path.strip_prefix('/').unwrap_or(path).split('/').collect();
        let m = req.method.as_str();
        let not_allowed = || ApiError::new(ErrorKind::MethodNotAllowed, format!("{m} {path}"));
        match segs.as_slice() {
            ["health"] => match m {
                "GET" => Ok(ApiResponse::json(200, &json!({"status": "ok"}))),
                _ => Err(not_allowed()),
            },
            ["cases"] => match m {
                "POST" => self.upload(&req.body),
                _ => Err(not_allowed()),
            },
            ["cases", id] if !id.is_empty() => match m {
                "GET" => self.get_case(id),
                _ => Err(not_allowed()),
            },
            ["cases", id, "diagnose"] if !id.is_empty() => match m {
                "POST" => self.diagnose(id, parse_force(query)?),
                _ => Err(not_allowed()),
            },
            ["sessions"] => match m {
                "POST" => self.create_session(&req.body),
                _ => Err(not_allowed()),
            },
            ["sessions", id] if !id.is_empty() => match m {
                "GET" => self.get_session(id),
                _ => Err(not_allowed()),
            },
            ["sessions", id, "chat"] if !id.is_empty() => match m {
                "POST" => self.chat(id, &req.body),
                _ => Err(not_allowed()),
            },
            ["eval"] => match m {
                "POST" => self.eval(&req.body),
                _ => Err(not_allowed()),
            },
            _ => Err(ApiError::new(ErrorKind::NotFound, format!("no route for {path}"))),
        }
    }

    fn upload(&self, body: &[u8]) -> Result<ApiResponse, ApiError> {
        let obj = json_object(body)?;
        let encoded = req_str(&obj, "image_base64")?;
        let width = req_dim(&obj, "width")?;
        let height = req_dim(&obj, "height")?;
        let hint = opt_str(&obj, "case_id")?;
        if encoded.len() > body_limit(self.opts.max_upload_bytes) {
            return Err(ApiError::new(ErrorKind::PayloadTooLarge, "image exceeds the upload limit"));
        }
        let image = base64::engine::general_purpose::STANDARD
            .decode(encoded)
            .map_err(|e| ApiError::new(ErrorKind::InvalidField, format!("image_base64: {e}")))?;
        if image.is_empty() {
            return Err(ApiError::new(ErrorKind::MissingField, "image_base64"));
        }
        if image.len() > self.opts.max_upload_bytes {
            return Err(ApiError::new(
                ErrorKind::PayloadTooLarge,
                format!("image of {} bytes exceeds the {}-byte limit", image.len(), self.opts.max_upload_bytes),
            ));
        }
        if let Some(h) = hint {
            if !valid_id(h) {
                return Err(ApiError::new(ErrorKind::InvalidField, "case_id must match [A-Za-z0-9._-]{1,64}"));
            }
        }

        let mut state = lock(&self.state);
        let case_id = match hint {
            Some(h) if state.cases.contains_key(h) => {
                return Err(ApiError::new(ErrorKind::Conflict, format!("case {h} already exists")));
            }
            Some(h) => h.to_string(),
            None => format!("case-{}", uuid::Uuid::new_v4().simple()),
        };
        let image_ref = match &self.store {
            Some(p) => {
                let path = p.root.join("images").join(format!("{case_id}.img"));
                std::fs::write(&path, &image).map_err(internal)?;
                path.display().to_string()
            }
            None => format!("sha256:{}", hex::encode(Sha256::digest(&image))),
        };
        let case = FundusCase::new(case_id.clone(), image_ref, width, height)
            .map_err(|e| ApiError::new(ErrorKind::InvalidField, e))?;
        if let Some(p) = &self.store {
            p.cases.append(&case).map_err(internal)?;
        }
        state.cases.insert(case_id.clone(), case);
        Ok(ApiResponse::json(201, &json!({ "case_id": case_id })))
    }

    fn get_case(&self, id: &str) -> Result<ApiResponse, ApiError> {
        let state = lock(&self.state);
        let case = state
            .cases
            .get(id)
            .ok_or_else(|| ApiError::new(ErrorKind::NotFound, format!("case {id}")))?;
        Ok(ApiResponse::json(
            200,
            &json!({ "case": case, "diagnosed": state.diagnoses.contains_key(id) }),
        ))
    }

    fn diagnose(&self, id: &str, force: bool) -> Result<ApiResponse, ApiError> {
        let case = {
            let state = lock(&self.state);
            let case = state
                .cases
                .get(id)
                .cloned()
                .ok_or_else(|| ApiError::new(ErrorKind::NotFound, format!("case {id}")))?;
            if !force {
                if let Some(c) = state.diagnoses.get(id) {
                    return Ok(ApiResponse::bytes(200, c.body.as_ref().clone()).with_header("x-cache", "hit"));
                }
            }
            case
        };

        let findings = run_diagnosis(&case, self.backend.as_ref(), &self.opts.pipeline).map_err(pipeline_error)?;
        let report = render_report(&findings, &case, &self.opts.report_template).map_err(report_error)?;

        let mut state = lock(&self.state);
        if !force {
            // a concurrent request may have finished first; its result stands
            if let Some(c) = state.diagnoses.get(id) {
                return Ok(ApiResponse::bytes(200, c.body.as_ref().clone()).with_header("x-cache", "hit"));
            }
        }
        let body = diagnose_body(&findings, &report);
        if let Some(p) = &self.store {
            p.diagnoses
                .append(&DiagnosisRecord {
                    case_id: id.to_string(),
                    findings,
                    report: report.clone(),
                })
                .map_err(internal)?;
        }
        state.diagnoses.insert(
            id.to_string(),
            Cached {
                body: Arc::new(body.clone()),
                report,
            },
        );
        Ok(ApiResponse::bytes(200, body).with_header("x-cache", "miss"))
    }

    fn create_session(&self, body: &[u8]) -> Result<ApiResponse, ApiError> {
        let obj = if body.iter().all(u8::is_ascii_whitespace) {
            Map::new()
        } else {
            json_object(body)?
        };
        let case_id = opt_str(&obj, "case_id")?;
        let mut state = lock(&self.state);
        let report = match case_id {
            None => None,
            Some(cid) => {
                if !state.cases.contains_key(cid) {
                    return Err(ApiError::new(ErrorKind::NotFound, format!("case {cid}")));
                }
                let cached = state
                    .diagnoses
                    .get(cid)
                    .ok_or_else(|| ApiError::new(ErrorKind::Conflict, format!("case {cid} has not been diagnosed")))?;
                Some(cached.report.clone())
            }
        };
        let mut session = ChatSession::new(format!("sess-{}", uuid::Uuid::new_v4().simple()));
        if let Some(r) = &report {
            session.attach_report(r.clone()).map_err(internal)?;
        }
        if let Some(p) = &self.store {
            p.sessions.record_created(&session).map_err(internal)?;
            if let Some(r) = &report {
                p.sessions.record_report(&session.session_id, r).map_err(internal)?;
            }
        }
        let id = session.session_id.clone();
        state.sessions.insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(ApiResponse::json(
            201,
            &json!({ "session_id": id, "report_attached": report.is_some() }),
        ))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<ChatSession>>, ApiError> {
        lock(&self.state)
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(ErrorKind::NotFound, format!("session {id}")))
    }

    fn get_session(&self, id: &str) -> Result<ApiResponse, ApiError> {
        let handle = self.session(id)?;
        let s = lock(&handle);
        #[derive(Serialize)]
        struct View<'a> {
            session_id: &'a str,
            created_at: DateTime<Utc>,
            report: Option<&'a DiagnosticReport>,
            history: &'a [DialogueTurn],
        }
        Ok(ApiResponse::json(
            200,
            &View {
                session_id: &s.session_id,
                created_at: s.created_at,
                report: s.report(),
                history: s.history(),
            },
        ))
    }

    fn chat(&self, id: &str, body: &[u8]) -> Result<ApiResponse, ApiError> {
        let obj = json_object(body)?;
        let text = req_str(&obj, "text")?;
        let handle = self.session(id)?;
        // held for the whole exchange: turns within one session are serialized
        let mut session = lock(&handle);
        let assistant = chat_turn(&mut session, text, self.llm.as_ref(), &self.opts.prompt_template).map_err(dialogue_error)?;
        if let Some(p) = &self.store {
            let h = session.history();
            p.sessions.record_turns(id, &h[h.len() - 2..]).map_err(internal)?;
        }
        Ok(ApiResponse::json(
            200,
            &json!({ "assistant_text": assistant.text, "turn_index": assistant.turn_index }),
        ))
    }

    fn eval(&self, body: &[u8]) -> Result<ApiResponse, ApiError> {
        let obj = json_object(body)?;
        let pred = req_str(&obj, "predictions")?;
        let truth = req_str(&obj, "truth")?;
        let table: MetricsTable = evaluate_files(Path::new(pred), Path::new(truth)).map_err(eval_error)?;
        Ok(ApiResponse::json(
            200,
            &json!({ "rows": table.rows, "table": table.render_text() }),
        ))
    }
}

fn parse_force(query: &str) -> Result<bool, ApiError> {
    let mut force = false;
    for pair in query.split('&').filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').unwrap_or((pair, "true"));
        if k != "force" {
            continue;
        }
        force = match v {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(ApiError::new(ErrorKind::InvalidField, format!("force={other}"))),
        };
    }
    Ok(force)
}

fn json_object(body: &[u8]) -> Result<Map<String, Value>, ApiError> {
    let v: Value = serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorKind::InvalidJson, e))?;
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(ApiError::new(ErrorKind::InvalidJson, "body must be a JSON object")),
    }
}

fn req_str<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a str, ApiError> {
    match obj.get(name) {
        None | Some(Value::Null) => Err(ApiError::new(ErrorKind::MissingField, name)),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(ApiError::new(ErrorKind::InvalidField, format!("{name} must be a string"))),
    }
}

fn opt_str<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<Option<&'a str>, ApiError> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(ApiError::new(ErrorKind::InvalidField, format!("{name} must be a string"))),
    }
}

fn req_dim(obj: &Map<String, Value>, name: &str) -> Result<u32, ApiError> {
    let v = obj.get(name).filter(|v| !v.is_null()).ok_or_else(|| ApiError::new(ErrorKind::MissingField, name))?;
    v.as_u64()
        .filter(|&n| n > 0)
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| ApiError::new(ErrorKind::InvalidField, format!("{name} must be a positive integer")))
}

fn pipeline_error(e: PipelineError) -> ApiError {
    match &e {
        PipelineError::Task {
            source: InferenceError::CaseUnknown(_),
            ..
        } => ApiError::new(ErrorKind::Unprocessable, e),
        PipelineError::InvalidCase(_) | PipelineError::InvalidThreshold(_) | PipelineError::CaseList { .. } => {
            ApiError::new(ErrorKind::Unprocessable, e)
        }
        _ => ApiError::new(ErrorKind::BackendUnavailable, e),
    }
}

fn report_error(e: ReportError) -> ApiError {
    ApiError::new(ErrorKind::Unprocessable, e)
}

fn dialogue_error(e: DialogueError) -> ApiError {
    match e {
        DialogueError::EmptyInput => ApiError::new(ErrorKind::EmptyInput, "text is empty"),
        DialogueError::PromptTooLong { .. } => ApiError::new(ErrorKind::Unprocessable, e),
        DialogueError::Backend(_) => ApiError::new(ErrorKind::BackendUnavailable, e),
        other => internal(other),
    }
}

fn eval_error(e: EvalError) -> ApiError {
    ApiError::new(ErrorKind::Unprocessable, e)
}

/// Blocking `tiny_http` front end for an [`Api`].
pub struct HttpServer {
    server: Arc<tiny_http::Server>,
    stopping: Arc<AtomicBool>,
}

impl HttpServer {
    pub fn bind(addr: &str) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(std::io::Error::other)?;
        Ok(Self {
            server: Arc::new(server),
            stopping: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.server.server_addr().to_ip()
    }

    /// Stops [`HttpServer::run`] from another thread.
    pub fn shutdown_handle(&self) -> impl Fn() + Send + Sync + 'static {
        let (server, stopping) = (Arc::clone(&self.server), Arc::clone(&self.stopping));
        move || {
            stopping.store(true, Ordering::SeqCst);
            server.unblock();
        }
    }

    /// Serves requests on `workers` threads until shut down.
    pub fn run(&self, api: &Api, workers: usize) {
        std::thread::scope(|scope| {
            for _ in 0..workers.max(1) {
                scope.spawn(|| {
                    while !self.stopping.load(Ordering::SeqCst) {
                        match self.server.recv_timeout(Duration::from_millis(100)) {
                            Ok(Some(req)) => serve_one(api, req),
                            Ok(None) => {}
                            Err(e) => {
                                tracing::warn!("accept failed: {e}");
                                break;
                            }
                        }
                    }
                });
            }
        });
    }
}

/// Oversized bodies are read and discarded up to this many bytes so the
/// client sees the 413 instead of a reset connection.
const DRAIN_LIMIT: u64 = 64 * 1024 * 1024;

fn serve_one(api: &Api, mut req: tiny_http::Request) {
    let limit = body_limit(api.options().max_upload_bytes);
    let method = req.method().as_str().to_string();
    let path = req.url().to_string();
    let too_large = || -> ApiResponse { ApiError::new(ErrorKind::PayloadTooLarge, "request body exceeds the limit").into() };
    let resp = if req.body_length().is_some_and(|n| n > limit) {
        let _ = std::io::copy(&mut req.as_reader().take(DRAIN_LIMIT), &mut std::io::sink());
        too_large()
    } else {
        let mut body = Vec::new();
        match req.as_reader().take(limit as u64 + 1).read_to_end(&mut body) {
            Err(e) => ApiError::new(ErrorKind::InvalidJson, format!("reading body: {e}")).into(),
            Ok(_) if body.len() > limit => {
                let _ = std::io::copy(&mut req.as_reader().take(DRAIN_LIMIT), &mut std::io::sink());
                too_large()
            }
            Ok(_) => api.handle(&ApiRequest { method, path, body }),
        }
    };
    let mut out = tiny_http::Response::from_data(resp.body).with_status_code(resp.status);
    for (k, v) in &resp.headers {
        if let Ok(h) = tiny_http::Header::from_bytes(k.as_bytes(), v.as_bytes()) {
            out.add_header(h);
        }
    }
    if let Err(e) = req.respond(out) {
        tracing::warn!("failed to send response: {e}");
    }
}
