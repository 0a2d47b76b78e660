//! Instruction and dialogue dataset construction.
//!
//! Stages: build generation prompts from knowledge records and real
//! dialogues, generate raw instances with a chat-completion backend, clean,
//! drop duplicates against the pool, quality-gate, and export accepted
//! instances for fine-tuning.

pub mod batch;
pub mod clean;
pub mod dedup;
pub mod export;
pub mod gate;
pub mod generate;
pub mod pool;
pub mod prompts;
pub mod records;

use serde::{Deserialize, Serialize};

pub use batch::{run_batch, BatchConfig, BatchSummary};
pub use clean::{clean, normalize, CleanOutcome, CleaningConfig, RejectReason};
pub use dedup::{dedup, jaccard, trigrams, DedupDecision, DEFAULT_DEDUP_THRESHOLD};
pub use export::{export_finetune, ExportSummary};
pub use gate::{quality_gate, GateError, HeuristicScorer, OverrideDecision, Overrides, Scorer};
pub use generate::{generate, generate_batch, GenerateSummary, GenerationParams, RawInstance};
pub use pool::Pool;
pub use prompts::{make_dialogue_prompt, make_knowledge_prompt, GenTemplate, GenerationPrompt};
pub use records::{KnowledgeRecord, RawDialogue, Scenario, Speaker, Utterance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Instruction,
    Conversation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Knowledge,
    Dialogue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateStatus {
    Pending,
    Accepted,
    Review,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolInstance {
    pub instance_id: String,
    pub kind: InstanceKind,
    pub prompt_text: String,
    pub response_text: String,
    pub disease: String,
    pub scenario: Option<Scenario>,
    pub provenance: Provenance,
    pub source_id: String,
    pub gate_status: GateStatus,
    pub normalized_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}
