use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pool::Pool;
use super::{ForgeError, GateStatus, Provenance, Scenario};
use crate::store::write_jsonl_atomic;

/// One fine-tuning example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub prompt: String,
    pub response: String,
    pub disease: String,
    pub scenario: Option<Scenario>,
    pub provenance: Provenance,
    pub source_id: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub pending: usize,
    pub accepted: usize,
    pub review: usize,
    pub rejected: usize,
    pub exported: usize,
}

/// Writes accepted instances as JSONL ordered by `instance_id`.
pub fn export_finetune(pool: &Pool, out_path: &Path) -> Result<ExportSummary, ForgeError> {
    let records: Vec<ExportRecord> = pool
        .instances()
        .filter(|i| i.gate_status == GateStatus::Accepted)
        .map(|i| ExportRecord {
            prompt: i.prompt_text.clone(),
            response: i.response_text.clone(),
            disease: i.disease.clone(),
            scenario: i.scenario,
            provenance: i.provenance,
            source_id: i.source_id.clone(),
        })
        .collect();
    write_jsonl_atomic(out_path, &records)?;
    Ok(ExportSummary {
        pending: pool.count(GateStatus::Pending),
        accepted: pool.count(GateStatus::Accepted),
        review: pool.count(GateStatus::Review),
        rejected: pool.count(GateStatus::Rejected),
        exported: records.len(),
    })
}
