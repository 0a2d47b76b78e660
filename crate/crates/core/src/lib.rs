//! Fundus-image diagnosis pipeline feeding structured diagnostic reports
//! into an LLM-backed dialogue engine, together with the instruction and
//! dialogue dataset forge and the ACC/Dice evaluation harness.
//!
//! Vision models are reached through [`inference::Backend`]; the shipped
//! [`inference::OracleBackend`] answers from precomputed prediction files so
//! every stage can be exercised deterministically without trained weights.

pub mod config;
pub mod dialogue;
pub mod forge;
pub mod inference;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod retry;
pub mod service;
pub mod store;
pub mod task;

pub use dialogue::{ChatSession, DialogueTurn, PromptTemplate, PromptText, Role};
pub use inference::{Backend, ClassOutcome, InferenceError, LesionMask, OracleBackend};
pub use pipeline::{DiagnosisFindings, FundusCase, LesionSummary, PipelineConfig};
pub use report::{DiagnosticReport, ReportTemplate};
pub use task::TaskId;
