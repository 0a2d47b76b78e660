//! C ABI for the diagnosis pipeline, report rendering, prompt assembly and
//! the evaluation metrics.
//!
//! Every function returns an [`OphStatus`]. On failure the message is
//! available from [`oph_last_error`] on the same thread. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`oph_string_free`]; handles are released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ophglm::dialogue::{build_prompt, chat_turn, DialogueError};
use ophglm::inference::{load_oracle, InferenceError};
use ophglm::llm::{Completion, CompletionRequest, LlmClient, LlmError};
use ophglm::metrics::{accuracy, dice, ConfusionCounts};
use ophglm::pipeline::{run_diagnosis, PipelineConfig, PipelineError};
use ophglm::report::render_report;
use ophglm::{ChatSession, DiagnosticReport, FundusCase, LesionMask, OracleBackend, PromptTemplate, ReportTemplate, TaskId};

/// Result code of every `oph_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OphStatus {
    OphOk = 0,
    OphNullArgument = 1,
    OphInvalidUtf8 = 2,
    OphInvalidInput = 3,
    OphNotFound = 4,
    OphBackendUnavailable = 5,
    OphUndefined = 6,
    OphPanic = 7,
}

/// Precomputed-prediction backend loaded from a manifest.
pub struct OphOracle {
    backend: OracleBackend,
}

/// Chat session holding at most one report and its turn history.
pub struct OphSession {
    session: ChatSession,
    template: PromptTemplate,
}

/// Completion callback. Writes a NUL-terminated reply of at most `cap` bytes
/// into `out` and returns 0, or returns non-zero on failure.
pub type OphCompleteFn =
    Option<unsafe extern "C" fn(ctx: *mut c_void, prompt: *const c_char, out: *mut c_char, cap: usize) -> i32>;

/// Reply buffer size handed to [`OphCompleteFn`].
pub const OPH_REPLY_CAPACITY: usize = 65536;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: OphStatus, msg: impl std::fmt::Display) -> OphStatus {
    set_error(msg.to_string());
    status
}

fn guard(f: impl FnOnce() -> OphStatus) -> OphStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(OphStatus::OphPanic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, OphStatus> {
    if p.is_null() {
        return Err(fail(OphStatus::OphNullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(OphStatus::OphInvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn out_string(s: String, out: *mut *mut c_char) -> OphStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            OphStatus::OphOk
        }
        Err(_) => fail(OphStatus::OphInvalidInput, "result contains an interior NUL byte"),
    }
}

fn inference_status(e: &InferenceError) -> OphStatus {
    match e {
        InferenceError::CaseUnknown(_) | InferenceError::ManifestNotFound(_) => OphStatus::OphNotFound,
        e if e.is_backend_failure() => OphStatus::OphBackendUnavailable,
        _ => OphStatus::OphInvalidInput,
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message of the last failed call on this thread; empty when none. Valid
/// until the next `oph_*` call on the same thread.
#[no_mangle]
pub extern "C" fn oph_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn oph_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn oph_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads an oracle manifest (TSV of case_id, task, sidecar_path).
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oph_oracle_load(manifest_path: *const c_char, out: *mut *mut OphOracle) -> OphStatus {
    guard(|| {
        if out.is_null() {
            return fail(OphStatus::OphNullArgument, "out is null");
        }
        let path = tri!(str_arg(manifest_path, "manifest_path"));
        match load_oracle(Path::new(path)) {
            Ok(backend) => {
                *out = Box::into_raw(Box::new(OphOracle { backend }));
                OphStatus::OphOk
            }
            Err(e) => fail(inference_status(&e), &e),
        }
    })
}

/// # Safety
/// `oracle` must be null or a handle from [`oph_oracle_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn oph_oracle_free(oracle: *mut OphOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

/// Runs all nine tasks for one case and renders the default report.
///
/// # Safety
/// `oracle` must be a live handle, `case_id` a NUL-terminated string and
/// `out_report` writable.
#[no_mangle]
pub unsafe extern "C" fn oph_diagnose(
    oracle: *const OphOracle,
    case_id: *const c_char,
    width: u32,
    height: u32,
    out_report: *mut *mut c_char,
) -> OphStatus {
    guard(|| {
        if oracle.is_null() || out_report.is_null() {
            return fail(OphStatus::OphNullArgument, "oracle or out_report is null");
        }
        let id = tri!(str_arg(case_id, "case_id"));
        let case = match FundusCase::new(id, format!("ffi:{id}"), width, height) {
            Ok(c) => c,
            Err(e) => return fail(OphStatus::OphInvalidInput, e),
        };
        let findings = match run_diagnosis(&case, &(*oracle).backend, &PipelineConfig::default()) {
            Ok(f) => f,
            Err(e) => {
                let status = match &e {
                    PipelineError::Task { source, .. } => inference_status(source),
                    _ => OphStatus::OphInvalidInput,
                };
                return fail(status, e);
            }
        };
        match render_report(&findings, &case, &ReportTemplate::default_template()) {
            Ok(r) => out_string(r.text, out_report),
            Err(e) => fail(OphStatus::OphInvalidInput, e),
        }
    })
}

/// New session using the default prompt template.
///
/// # Safety
/// `session_id` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oph_session_new(session_id: *const c_char, out: *mut *mut OphSession) -> OphStatus {
    guard(|| {
        if out.is_null() {
            return fail(OphStatus::OphNullArgument, "out is null");
        }
        let id = tri!(str_arg(session_id, "session_id"));
        *out = Box::into_raw(Box::new(OphSession {
            session: ChatSession::new(id),
            template: PromptTemplate::default(),
        }));
        OphStatus::OphOk
    })
}

/// # Safety
/// `session` must be null or a handle from [`oph_session_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn oph_session_free(session: *mut OphSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Attaches a report text; a session accepts one report.
///
/// # Safety
/// `session` must be a live handle; the strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn oph_session_attach_report(
    session: *mut OphSession,
    case_id: *const c_char,
    report_text: *const c_char,
) -> OphStatus {
    guard(|| {
        if session.is_null() {
            return fail(OphStatus::OphNullArgument, "session is null");
        }
        let case_id = tri!(str_arg(case_id, "case_id"));
        let text = tri!(str_arg(report_text, "report_text"));
        let report = DiagnosticReport {
            case_id: case_id.to_string(),
            text: text.to_string(),
            findings_digest: String::new(),
        };
        match (*session).session.attach_report(report) {
            Ok(()) => OphStatus::OphOk,
            Err(e) => fail(OphStatus::OphInvalidInput, e),
        }
    })
}

/// The prompt that the next user turn would send, without sending it.
///
/// # Safety
/// `session` must be a live handle, `user_turn` NUL-terminated and
/// `out_prompt` writable.
#[no_mangle]
pub unsafe extern "C" fn oph_session_build_prompt(
    session: *const OphSession,
    user_turn: *const c_char,
    out_prompt: *mut *mut c_char,
) -> OphStatus {
    guard(|| {
        if session.is_null() || out_prompt.is_null() {
            return fail(OphStatus::OphNullArgument, "session or out_prompt is null");
        }
        let turn = tri!(str_arg(user_turn, "user_turn"));
        let s = &*session;
        match build_prompt(&s.session, turn, &s.template) {
            Ok(p) => out_string(p.text, out_prompt),
            Err(e) => fail(OphStatus::OphInvalidInput, e),
        }
    })
}

struct CallbackLlm {
    complete: unsafe extern "C" fn(*mut c_void, *const c_char, *mut c_char, usize) -> i32,
    ctx: *mut c_void,
}

// the callback is only invoked on the calling thread, inside oph_session_chat
unsafe impl Send for CallbackLlm {}
unsafe impl Sync for CallbackLlm {}

impl LlmClient for CallbackLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let unavailable = |detail: &str| LlmError::BackendUnavailable {
            retries: 0,
            detail: detail.to_string(),
        };
        let prompt = CString::new(request.prompt.clone()).map_err(|_| unavailable("prompt contains NUL"))?;
        let mut buf = vec![0u8; OPH_REPLY_CAPACITY];
        let rc = unsafe { (self.complete)(self.ctx, prompt.as_ptr(), buf.as_mut_ptr().cast(), buf.len()) };
        if rc != 0 {
            return Err(unavailable(&format!("completion callback returned {rc}")));
        }
        let text = CStr::from_bytes_until_nul(&buf).map_err(|_| unavailable("reply is not NUL-terminated"))?;
        let text = text.to_str().map_err(|_| unavailable("reply is not UTF-8"))?;
        Ok(Completion { text: text.to_string() })
    }
}

/// Runs one exchange through `complete`. The session gains both turns only
/// when the callback succeeds.
///
/// # Safety
/// `session` must be a live handle, `user_turn` NUL-terminated,
/// `out_reply` writable, and `complete` safe to call with `ctx`.
#[no_mangle]
pub unsafe extern "C" fn oph_session_chat(
    session: *mut OphSession,
    user_turn: *const c_char,
    complete: OphCompleteFn,
    ctx: *mut c_void,
    out_reply: *mut *mut c_char,
) -> OphStatus {
    guard(|| {
        let Some(complete) = complete else {
            return fail(OphStatus::OphNullArgument, "complete is null");
        };
        if session.is_null() || out_reply.is_null() {
            return fail(OphStatus::OphNullArgument, "session or out_reply is null");
        }
        let turn = tri!(str_arg(user_turn, "user_turn"));
        let s = &mut *session;
        let llm = CallbackLlm { complete, ctx };
        match chat_turn(&mut s.session, turn, &llm, &s.template) {
            Ok(t) => out_string(t.text, out_reply),
            Err(e @ DialogueError::Backend(_)) => fail(OphStatus::OphBackendUnavailable, e),
            Err(e) => fail(OphStatus::OphInvalidInput, e),
        }
    })
}

/// Number of turns in the session history.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oph_session_turn_count(session: *const OphSession) -> usize {
    if session.is_null() {
        return 0;
    }
    (*session).session.history().len()
}

/// `(tp + tn) / (tp + tn + fp + fn)`; `OPH_UNDEFINED` when all are zero.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oph_accuracy(tp: u64, tn: u64, fp: u64, fn_: u64, out: *mut f64) -> OphStatus {
    guard(|| {
        if out.is_null() {
            return fail(OphStatus::OphNullArgument, "out is null");
        }
        match accuracy(&ConfusionCounts { tp, tn, fp, fn_ }) {
            Ok(v) => {
                *out = v;
                OphStatus::OphOk
            }
            Err(e) => fail(OphStatus::OphUndefined, e),
        }
    })
}

/// Dice overlap of two row-major 0/1 masks of `width * height` bytes. Both
/// masks empty gives 1.0.
///
/// # Safety
/// `x` and `y` must each point to `width * height` readable bytes; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn oph_dice(x: *const u8, y: *const u8, width: u32, height: u32, out: *mut f64) -> OphStatus {
    guard(|| {
        if x.is_null() || y.is_null() || out.is_null() {
            return fail(OphStatus::OphNullArgument, "x, y or out is null");
        }
        let n = width as usize * height as usize;
        let mask = |p: *const u8| {
            let bits = std::slice::from_raw_parts(p, n).to_vec();
            LesionMask::new(TaskId::Ex, width, height, bits)
        };
        let (mx, my) = match (mask(x), mask(y)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return fail(OphStatus::OphInvalidInput, e),
        };
        match dice(&mx, &my) {
            Ok(v) => {
                *out = v;
                OphStatus::OphOk
            }
            Err(e) => fail(OphStatus::OphInvalidInput, e),
        }
    })
}
