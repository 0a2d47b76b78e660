//! Runs the whole forge over a batch of records and dialogues.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::clean::{clean, CleanOutcome, CleaningConfig};
use super::dedup::{dedup_and_append, DEFAULT_DEDUP_THRESHOLD};
use super::gate::{gate_pool, Overrides, Scorer, DEFAULT_GATE_THRESHOLD};
use super::generate::{generate_batch, GenerationParams};
use super::pool::Pool;
use super::prompts::{make_dialogue_prompt, make_knowledge_prompt, GenTemplate};
use super::records::{KnowledgeRecord, RawDialogue};
use super::{ForgeError, GateStatus};
use crate::llm::LlmClient;

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub template: GenTemplate,
    pub cleaning: CleaningConfig,
    pub params: GenerationParams,
    pub dedup_threshold: f64,
    pub gate_threshold: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            template: GenTemplate::default(),
            cleaning: CleaningConfig::default(),
            params: GenerationParams::default(),
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            gate_threshold: DEFAULT_GATE_THRESHOLD,
        }
    }
}

/// Stage counts for one batch. `generated >= cleaned >= appended >= accepted`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub prompts: usize,
    pub generated: usize,
    pub generation_failed: usize,
    pub cleaned: usize,
    pub clean_rejected: usize,
    pub dedup_rejected: usize,
    pub appended: usize,
    pub accepted: usize,
    pub review: usize,
    pub rejected: usize,
    /// Instances appended in this batch, per scenario (`conversation` for dialogues).
    pub per_scenario: BTreeMap<String, usize>,
}

#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    records: &[KnowledgeRecord],
    dialogues: &[RawDialogue],
    llm: &dyn LlmClient,
    scorer: &dyn Scorer,
    overrides: &Overrides,
    config: &BatchConfig,
    pool: &mut Pool,
    review_queue: Option<&Path>,
) -> Result<BatchSummary, ForgeError> {
    let mut prompts = Vec::with_capacity(records.len() + dialogues.len());
    for r in records {
        prompts.push(make_knowledge_prompt(r, &config.template)?);
    }
    prompts.extend(dialogues.iter().map(|d| make_dialogue_prompt(d, &config.template)));

    let (raws, gen) = generate_batch(&prompts, llm, config.params);
    let mut summary = BatchSummary {
        prompts: prompts.len(),
        generated: gen.ok,
        generation_failed: gen.failed,
        ..BatchSummary::default()
    };

    let mut cleaned = Vec::with_capacity(raws.len());
    for raw in &raws {
        match clean(raw, &config.cleaning) {
            CleanOutcome::Kept(i) => cleaned.push(i),
            CleanOutcome::Rejected(reason) => {
                tracing::debug!(prompt = %raw.prompt.prompt_id, %reason, "cleaning rejected instance");
                summary.clean_rejected += 1;
            }
        }
    }
    summary.cleaned = cleaned.len();

    let before: Vec<String> = pool.instances().map(|i| i.instance_id.clone()).collect();
    let d = dedup_and_append(pool, cleaned, config.dedup_threshold)?;
    summary.dedup_rejected = d.rejected();
    summary.appended = d.accepted;
    let before: std::collections::HashSet<String> = before.into_iter().collect();
    let new_ids: Vec<String> = pool
        .instances()
        .filter(|i| !before.contains(&i.instance_id))
        .map(|i| i.instance_id.clone())
        .collect();

    gate_pool(pool, scorer, config.gate_threshold, overrides, review_queue)?;
    for id in &new_ids {
        let inst = pool.get(id).expect("appended instance present");
        match inst.gate_status {
            GateStatus::Accepted => summary.accepted += 1,
            GateStatus::Review => summary.review += 1,
            GateStatus::Rejected => summary.rejected += 1,
            GateStatus::Pending => {}
        }
        let key = inst.scenario.map_or_else(|| "conversation".to_string(), |s| s.to_string());
        *summary.per_scenario.entry(key).or_default() += 1;
    }
    Ok(summary)
}
