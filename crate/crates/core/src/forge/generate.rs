use serde::{Deserialize, Serialize};

use super::prompts::GenerationPrompt;
use crate::llm::{CompletionRequest, LlmClient, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: 1024,
            temperature: 0.7,
        }
    }
}

/// Generator output plus everything needed to trace it back to its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInstance {
    pub prompt: GenerationPrompt,
    pub params: GenerationParams,
    pub output: String,
}

pub fn generate(
    prompt: &GenerationPrompt,
    llm: &dyn LlmClient,
    params: GenerationParams,
) -> Result<RawInstance, LlmError> {
    let completion = llm.complete(&CompletionRequest {
        prompt: prompt.text.clone(),
        max_tokens: params.max_tokens,
        temperature: params.temperature,
    })?;
    Ok(RawInstance {
        prompt: prompt.clone(),
        params,
        output: completion.text,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub ok: usize,
    pub failed: usize,
    /// `(prompt_id, error)` for each failed prompt.
    pub failures: Vec<(String, String)>,
}

/// Generates every prompt, recording failures and carrying on.
pub fn generate_batch(
    prompts: &[GenerationPrompt],
    llm: &dyn LlmClient,
    params: GenerationParams,
) -> (Vec<RawInstance>, GenerateSummary) {
    let mut out = Vec::with_capacity(prompts.len());
    let mut summary = GenerateSummary::default();
    for p in prompts {
        match generate(p, llm, params) {
            Ok(raw) => {
                summary.ok += 1;
                out.push(raw);
            }
            Err(e) => {
                tracing::warn!(prompt = %p.prompt_id, error = %e, "generation failed");
                summary.failed += 1;
                summary.failures.push((p.prompt_id.clone(), e.to_string()));
            }
        }
    }
    (out, summary)
}
