//! Turns raw generator output into pending pool instances.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generate::RawInstance;
use super::{ForgeError, GateStatus, PoolInstance};

pub const DEFAULT_CLEANING: &str = include_str!("../../templates/cleaning.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    pub boilerplate_prefixes: Vec<String>,
    /// Bounds on character counts of both prompt and response after cleaning.
    pub min_chars: usize,
    pub max_chars: usize,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_CLEANING).expect("shipped cleaning config is valid")
    }
}

impl CleaningConfig {
    pub fn parse(src: &str) -> Result<Self, ForgeError> {
        let c: Self = toml::from_str(src).map_err(|e| ForgeError::Template(e.to_string()))?;
        if c.max_chars < c.min_chars {
            return Err(ForgeError::Template("max_chars below min_chars".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ForgeError> {
        let src = std::fs::read_to_string(path).map_err(|e| ForgeError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&src)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    Unparseable,
    Empty,
    TooShort,
    TooLong,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::Unparseable => "unparseable",
            RejectReason::Empty => "empty",
            RejectReason::TooShort => "too-short",
            RejectReason::TooLong => "too-long",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CleanOutcome {
    Kept(PoolInstance),
    Rejected(RejectReason),
}

impl CleanOutcome {
    pub fn kept(self) -> Option<PoolInstance> {
        match self {
            CleanOutcome::Kept(i) => Some(i),
            CleanOutcome::Rejected(_) => None,
        }
    }
}

/// Lower-cases and collapses every whitespace run to one space.
pub fn normalize(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_boilerplate<'a>(mut s: &'a str, prefixes: &[String]) -> &'a str {
    s = s.trim_start();
    loop {
        let hit = prefixes.iter().find(|p| {
            !p.is_empty()
                && s.len() >= p.len()
                && s.is_char_boundary(p.len())
                && s[..p.len()].eq_ignore_ascii_case(p)
        });
        match hit {
            Some(p) => s = s[p.len()..].trim_start(),
            None => return s,
        }
    }
}

/// Splits `Q: ...` / `A: ...` generator output into (prompt, response).
fn split_qa(output: &str) -> Option<(String, String)> {
    let mut q: Option<Vec<&str>> = None;
    let mut a: Option<Vec<&str>> = None;
    for line in output.lines() {
        let t = line.trim_start();
        if a.is_none() {
            if let Some(rest) = t.strip_prefix("A:") {
                q.as_ref()?;
                a = Some(vec![rest]);
                continue;
            }
            if q.is_none() {
                if let Some(rest) = t.strip_prefix("Q:") {
                    q = Some(vec![rest]);
                }
                continue;
            }
            q.as_mut()?.push(line);
        } else if let Some(v) = a.as_mut() {
            v.push(line);
        }
    }
    Some((q?.join("\n"), a?.join("\n")))
}

pub fn instance_id(prompt_id: &str, normalized_key: &str) -> String {
    let mut h = Sha256::new();
    h.update(prompt_id.as_bytes());
    h.update([0]);
    h.update(normalized_key.as_bytes());
    format!("inst-{}", &hex::encode(h.finalize())[..16])
}

pub fn clean(raw: &RawInstance, rules: &CleaningConfig) -> CleanOutcome {
    let Some((q, a)) = split_qa(&raw.output) else {
        return CleanOutcome::Rejected(RejectReason::Unparseable);
    };
    let prompt_text = collapse_ws(strip_boilerplate(&q, &rules.boilerplate_prefixes));
    let response_text = collapse_ws(strip_boilerplate(&a, &rules.boilerplate_prefixes));
    for text in [&prompt_text, &response_text] {
        let n = text.chars().count();
        if n == 0 {
            return CleanOutcome::Rejected(RejectReason::Empty);
        }
        if n < rules.min_chars {
            return CleanOutcome::Rejected(RejectReason::TooShort);
        }
        if n > rules.max_chars {
            return CleanOutcome::Rejected(RejectReason::TooLong);
        }
    }
    let normalized_key = normalize(&format!("{prompt_text} {response_text}"));
    let p = &raw.prompt;
    CleanOutcome::Kept(PoolInstance {
        instance_id: instance_id(&p.prompt_id, &normalized_key),
        kind: p.kind,
        prompt_text,
        response_text,
        disease: p.disease.clone(),
        scenario: p.scenario,
        provenance: p.provenance,
        source_id: p.source_id.clone(),
        gate_status: GateStatus::Pending,
        normalized_key,
        score: None,
    })
}
