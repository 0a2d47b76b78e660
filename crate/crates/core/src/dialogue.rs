//! Chat sessions and prompt construction.
//!
//! A prompt is the template preamble, then the attached diagnostic report
//! between the report delimiters, then every prior turn prefixed with its
//! role tag, then the new user turn and a bare assistant tag for the model to
//! continue from.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::llm::{CompletionRequest, LlmClient, LlmError};
use crate::report::DiagnosticReport;
use crate::store::{JsonlLog, StoreError};

pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../templates/prompt.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub role: Role,
    pub text: String,
    pub turn_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub preamble: String,
    pub report_open: String,
    pub report_close: String,
    pub user_tag: String,
    pub assistant_tag: String,
    /// Limit on the estimated prompt size; oldest turns are dropped to fit.
    #[serde(default = "default_max_prompt_tokens")]
    pub max_prompt_tokens: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_max_prompt_tokens() -> usize {
    4096
}
fn default_max_tokens() -> u32 {
    512
}
fn default_temperature() -> f64 {
    0.7
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_PROMPT_TEMPLATE).expect("shipped prompt template is valid")
    }
}

impl PromptTemplate {
    pub fn parse(src: &str) -> Result<Self, DialogueError> {
        let t: Self = toml::from_str(src).map_err(|e| DialogueError::Template(e.to_string()))?;
        for (name, v) in [
            ("report_open", &t.report_open),
            ("report_close", &t.report_close),
            ("user_tag", &t.user_tag),
            ("assistant_tag", &t.assistant_tag),
        ] {
            if v.trim().is_empty() || v.contains('\n') {
                return Err(DialogueError::Template(format!("{name} must be a non-empty single line")));
            }
        }
        if t.user_tag == t.assistant_tag {
            return Err(DialogueError::Template("user_tag and assistant_tag must differ".into()));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, DialogueError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| DialogueError::Template(format!("{}: {e}", path.display())))?;
        Self::parse(&src)
    }

    pub fn tag(&self, role: Role) -> &str {
        match role {
            Role::User => &self.user_tag,
            Role::Assistant => &self.assistant_tag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub token_estimate: usize,
}

/// `ceil(bytes / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DialogueError {
    #[error("empty-input: user turn is empty")]
    EmptyInput,
    #[error("prompt-too-long: estimated {estimate} tokens exceeds limit {limit}")]
    PromptTooLong { estimate: usize, limit: usize },
    #[error("report-already-attached")]
    ReportAlreadyAttached,
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("invalid history: {0}")]
    InvalidHistory(String),
    #[error("prompt template: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    report: Option<DiagnosticReport>,
    history: Vec<DialogueTurn>,
    pub created_at: DateTime<Utc>,
}

impl ChatSession {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            report: None,
            history: Vec::new(),
            created_at: Utc::now(),
        }
    }

    pub fn report(&self) -> Option<&DiagnosticReport> {
        self.report.as_ref()
    }

    pub fn history(&self) -> &[DialogueTurn] {
        &self.history
    }

    /// Attaches the diagnostic report. A session holds at most one report.
    pub fn attach_report(&mut self, report: DiagnosticReport) -> Result<(), DialogueError> {
        if self.report.is_some() {
            return Err(DialogueError::ReportAlreadyAttached);
        }
        self.report = Some(report);
        Ok(())
    }

    fn next_index(&self) -> u64 {
        self.history.last().map_or(0, |t| t.turn_index + 1)
    }

    /// Appends already-validated turns; used when replaying a stored session.
    fn push_turn(&mut self, turn: DialogueTurn) -> Result<(), DialogueError> {
        let expected_role = match self.history.last() {
            None | Some(DialogueTurn { role: Role::Assistant, .. }) => Role::User,
            Some(_) => Role::Assistant,
        };
        if turn.role != expected_role {
            return Err(DialogueError::InvalidHistory(format!(
                "turn {} should be {:?}",
                turn.turn_index, expected_role
            )));
        }
        if let Some(last) = self.history.last() {
            if turn.turn_index <= last.turn_index {
                return Err(DialogueError::InvalidHistory(format!(
                    "turn index {} does not increase",
                    turn.turn_index
                )));
            }
        }
        self.history.push(turn);
        Ok(())
    }
}

fn assemble(tpl: &PromptTemplate, report: Option<&DiagnosticReport>, turns: &[DialogueTurn], user_turn: &str) -> String {
    let mut s = tpl.preamble.clone();
    if let Some(r) = report {
        s.push_str(&tpl.report_open);
        s.push('\n');
        s.push_str(&r.text);
        if !r.text.ends_with('\n') {
            s.push('\n');
        }
        s.push_str(&tpl.report_close);
        s.push('\n');
    }
    for t in turns {
        s.push_str(tpl.tag(t.role));
        s.push(' ');
        s.push_str(&t.text);
        s.push('\n');
    }
    s.push_str(&tpl.user_tag);
    s.push(' ');
    s.push_str(user_turn);
    s.push('\n');
    s.push_str(&tpl.assistant_tag);
    s
}

/// Builds the prompt for the next user turn. When the estimate exceeds the
/// limit, the oldest user/assistant pairs are dropped until it fits; the
/// report is never truncated.
pub fn build_prompt(session: &ChatSession, user_turn: &str, tpl: &PromptTemplate) -> Result<PromptText, DialogueError> {
    let user_turn = user_turn.trim();
    if user_turn.is_empty() {
        return Err(DialogueError::EmptyInput);
    }
    let mut start = 0;
    loop {
        let text = assemble(tpl, session.report.as_ref(), &session.history[start..], user_turn);
        let token_estimate = estimate_tokens(&text);
        if token_estimate <= tpl.max_prompt_tokens {
            return Ok(PromptText { text, token_estimate });
        }
        if start >= session.history.len() {
            return Err(DialogueError::PromptTooLong {
                estimate: token_estimate,
                limit: tpl.max_prompt_tokens,
            });
        }
        start = (start + 2).min(session.history.len());
        tracing::debug!(session = %session.session_id, dropped = start, "truncating oldest turns");
    }
}

/// Runs one exchange. The session gains the user and assistant turns only
/// when the LLM call succeeds.
pub fn chat_turn(
    session: &mut ChatSession,
    user_turn: &str,
    llm: &dyn LlmClient,
    tpl: &PromptTemplate,
) -> Result<DialogueTurn, DialogueError> {
    let prompt = build_prompt(session, user_turn, tpl)?;
    tracing::debug!(session = %session.session_id, prompt = %prompt.text, "outgoing prompt");
    let completion = llm.complete(&CompletionRequest {
        prompt: prompt.text,
        max_tokens: tpl.max_tokens,
        temperature: tpl.temperature,
    })?;
    let idx = session.next_index();
    let user = DialogueTurn {
        role: Role::User,
        text: user_turn.trim().to_string(),
        turn_index: idx,
    };
    let assistant = DialogueTurn {
        role: Role::Assistant,
        text: completion.text.trim().to_string(),
        turn_index: idx + 1,
    };
    session.history.push(user);
    session.history.push(assistant.clone());
    Ok(assistant)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created { session_id: String, created_at: DateTime<Utc> },
    ReportAttached { report: DiagnosticReport },
    Turn { turn: DialogueTurn },
}

#[derive(Debug, thiserror::Error)]
pub enum SessionStoreError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("session {0}: {1}")]
    Corrupt(String, String),
}

/// One append-only JSONL event log per session under `dir`.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn log(&self, session_id: &str) -> JsonlLog<SessionEvent> {
        JsonlLog::new(self.dir.join(format!("{session_id}.jsonl")))
    }

    pub fn record_created(&self, s: &ChatSession) -> Result<(), SessionStoreError> {
        self.log(&s.session_id).append(&SessionEvent::Created {
            session_id: s.session_id.clone(),
            created_at: s.created_at,
        })?;
        Ok(())
    }

    pub fn record_report(&self, session_id: &str, report: &DiagnosticReport) -> Result<(), SessionStoreError> {
        self.log(session_id).append(&SessionEvent::ReportAttached { report: report.clone() })?;
        Ok(())
    }

    pub fn record_turns(&self, session_id: &str, turns: &[DialogueTurn]) -> Result<(), SessionStoreError> {
        let events: Vec<_> = turns.iter().map(|t| SessionEvent::Turn { turn: t.clone() }).collect();
        self.log(session_id).append_all(&events)?;
        Ok(())
    }

    /// Replays every session log in the directory.
    pub fn load_all(&self) -> Result<HashMap<String, ChatSession>, SessionStoreError> {
        let mut out = HashMap::new();
        let entries = match std::fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(source) => {
                return Err(StoreError::Io {
                    path: self.dir.clone(),
                    source,
                }
                .into())
            }
        };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            let session = self.replay(&id)?;
            out.insert(id, session);
        }
        Ok(out)
    }

    pub fn replay(&self, session_id: &str) -> Result<ChatSession, SessionStoreError> {
        let corrupt = |m: String| SessionStoreError::Corrupt(session_id.to_string(), m);
        let mut session: Option<ChatSession> = None;
        for ev in self.log(session_id).read_all()? {
            match ev {
                SessionEvent::Created { session_id, created_at } => {
                    let mut s = ChatSession::new(session_id);
                    s.created_at = created_at;
                    session = Some(s);
                }
                SessionEvent::ReportAttached { report } => session
                    .as_mut()
                    .ok_or_else(|| corrupt("report before creation".into()))?
                    .attach_report(report)
                    .map_err(|e| corrupt(e.to_string()))?,
                SessionEvent::Turn { turn } => session
                    .as_mut()
                    .ok_or_else(|| corrupt("turn before creation".into()))?
                    .push_turn(turn)
                    .map_err(|e| corrupt(e.to_string()))?,
            }
        }
        session.ok_or_else(|| corrupt("empty log".into()))
    }
}
