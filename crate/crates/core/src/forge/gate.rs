//! Quality gating: a pluggable scorer, a threshold, and human overrides.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pool::Pool;
use super::{clean::normalize, ForgeError, GateStatus, PoolInstance};
use crate::store::write_jsonl_atomic;

pub const DEFAULT_GATE_THRESHOLD: f64 = 0.5;

/// Scores an instance in `[0, 1]`; higher is better.
pub trait Scorer: Send + Sync {
    fn score(&self, instance: &PoolInstance) -> Result<f64, String>;
}

impl<F> Scorer for F
where
    F: Fn(&PoolInstance) -> Result<f64, String> + Send + Sync,
{
    fn score(&self, instance: &PoolInstance) -> Result<f64, String> {
        self(instance)
    }
}

/// Half response length (saturating at `target_chars`), half coverage of the
/// disease-name words in the instance text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicScorer {
    pub target_chars: usize,
}

impl Default for HeuristicScorer {
    fn default() -> Self {
        Self { target_chars: 200 }
    }
}

impl Scorer for HeuristicScorer {
    fn score(&self, inst: &PoolInstance) -> Result<f64, String> {
        let len = inst.response_text.chars().count() as f64;
        let length_score = (len / self.target_chars.max(1) as f64).min(1.0);
        let disease = normalize(&inst.disease);
        let terms: Vec<&str> = disease.split(' ').filter(|w| w.chars().count() >= 3).collect();
        let coverage = if terms.is_empty() {
            1.0
        } else {
            let text = &inst.normalized_key;
            terms.iter().filter(|t| text.contains(*t)).count() as f64 / terms.len() as f64
        };
        Ok(0.5 * length_score + 0.5 * coverage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideDecision {
    Accept,
    Reject,
}

/// Human review decisions keyed by instance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(pub HashMap<String, OverrideDecision>);

impl Overrides {
    /// Parses a TSV of `instance_id<TAB>accept|reject` rows; `#` comments allowed.
    pub fn parse(src: &str, origin: &str) -> Result<Self, ForgeError> {
        let mut map = HashMap::new();
        for (i, line) in src.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let err = |msg: String| ForgeError::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg,
            };
            let (id, decision) = t
                .split_once('\t')
                .ok_or_else(|| err("expected instance_id<TAB>decision".into()))?;
            let d = match decision.trim() {
                "accept" => OverrideDecision::Accept,
                "reject" => OverrideDecision::Reject,
                other => return Err(err(format!("unknown decision '{other}'"))),
            };
            map.insert(id.trim().to_string(), d);
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, ForgeError> {
        match std::fs::read_to_string(path) {
            Ok(s) => Self::parse(&s, &path.display().to_string()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(ForgeError::Io(format!("{}: {e}", path.display()))),
        }
    }

    pub fn get(&self, id: &str) -> Option<OverrideDecision> {
        self.0.get(id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GateError {
    #[error("instance {0} is not pending")]
    NotPending(String),
    #[error("scorer failed for {id}: {msg}")]
    Scorer { id: String, msg: String },
}

/// Gates a pending instance. An override wins over the score; otherwise
/// `score >= threshold` accepts and anything lower goes to review.
pub fn quality_gate(
    instance: &PoolInstance,
    scorer: &dyn Scorer,
    threshold: f64,
    overrides: &Overrides,
) -> Result<PoolInstance, GateError> {
    if instance.gate_status != GateStatus::Pending {
        return Err(GateError::NotPending(instance.instance_id.clone()));
    }
    let mut out = instance.clone();
    if let Some(d) = overrides.get(&instance.instance_id) {
        out.gate_status = match d {
            OverrideDecision::Accept => GateStatus::Accepted,
            OverrideDecision::Reject => GateStatus::Rejected,
        };
        return Ok(out);
    }
    let score = scorer.score(instance).map_err(|msg| GateError::Scorer {
        id: instance.instance_id.clone(),
        msg,
    })?;
    if !(0.0..=1.0).contains(&score) {
        return Err(GateError::Scorer {
            id: instance.instance_id.clone(),
            msg: format!("score {score} outside [0, 1]"),
        });
    }
    out.score = Some(score);
    out.gate_status = if score >= threshold {
        GateStatus::Accepted
    } else {
        GateStatus::Review
    };
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub accepted: usize,
    pub review: usize,
    pub rejected: usize,
    pub scorer_failures: usize,
}

/// Gates every pending instance, applies overrides to instances waiting in
/// review, and rewrites `review_queue` with all instances still in review.
pub fn gate_pool(
    pool: &mut Pool,
    scorer: &dyn Scorer,
    threshold: f64,
    overrides: &Overrides,
    review_queue: Option<&Path>,
) -> Result<GateSummary, ForgeError> {
    let mut summary = GateSummary::default();
    let candidates: Vec<PoolInstance> = pool
        .instances()
        .filter(|i| matches!(i.gate_status, GateStatus::Pending | GateStatus::Review))
        .cloned()
        .collect();
    for inst in candidates {
        let gated = if inst.gate_status == GateStatus::Review {
            let Some(d) = overrides.get(&inst.instance_id) else { continue };
            let mut i = inst;
            i.gate_status = match d {
                OverrideDecision::Accept => GateStatus::Accepted,
                OverrideDecision::Reject => GateStatus::Rejected,
            };
            i
        } else {
            match quality_gate(&inst, scorer, threshold, overrides) {
                Ok(i) => i,
                Err(e) => {
                    tracing::warn!(error = %e, "instance left pending");
                    summary.scorer_failures += 1;
                    continue;
                }
            }
        };
        match gated.gate_status {
            GateStatus::Accepted => summary.accepted += 1,
            GateStatus::Review => summary.review += 1,
            GateStatus::Rejected => summary.rejected += 1,
            GateStatus::Pending => {}
        }
        pool.update(gated)?;
    }
    if let Some(path) = review_queue {
        let queue: Vec<&PoolInstance> = pool.instances().filter(|i| i.gate_status == GateStatus::Review).collect();
        write_jsonl_atomic(path, &queue)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{InstanceKind, Provenance};

    fn inst(id: &str) -> PoolInstance {
        PoolInstance {
            instance_id: id.into(),
            kind: InstanceKind::Instruction,
            prompt_text: "What is AMD?".into(),
            response_text: "AMD is a disease.".into(),
            disease: "AMD".into(),
            scenario: None,
            provenance: Provenance::Knowledge,
            source_id: "kg-1".into(),
            gate_status: GateStatus::Pending,
            normalized_key: "what is amd? amd is a disease.".into(),
            score: None,
        }
    }

    fn fixed(score: f64) -> impl Scorer {
        move |_: &PoolInstance| Ok(score)
    }

    #[test]
    fn threshold_rule() {
        let none = Overrides::default();
        assert_eq!(quality_gate(&inst("a"), &fixed(0.7), 0.5, &none).unwrap().gate_status, GateStatus::Accepted);
        assert_eq!(quality_gate(&inst("a"), &fixed(0.5), 0.5, &none).unwrap().gate_status, GateStatus::Accepted);
        assert_eq!(quality_gate(&inst("a"), &fixed(0.3), 0.5, &none).unwrap().gate_status, GateStatus::Review);
    }

    #[test]
    fn override_wins() {
        let o = Overrides::parse("# reviewer notes\na\taccept\nb\treject\n", "o.tsv").unwrap();
        assert_eq!(quality_gate(&inst("a"), &fixed(0.3), 0.5, &o).unwrap().gate_status, GateStatus::Accepted);
        assert_eq!(quality_gate(&inst("b"), &fixed(0.9), 0.5, &o).unwrap().gate_status, GateStatus::Rejected);
        assert!(Overrides::parse("a\tmaybe\n", "o.tsv").is_err());
    }

    #[test]
    fn scorer_failure_and_out_of_range() {
        let failing = |_: &PoolInstance| -> Result<f64, String> { Err("timeout".into()) };
        assert!(matches!(
            quality_gate(&inst("a"), &failing, 0.5, &Overrides::default()),
            Err(GateError::Scorer { .. })
        ));
        assert!(quality_gate(&inst("a"), &fixed(1.5), 0.5, &Overrides::default()).is_err());
        let mut done = inst("a");
        done.gate_status = GateStatus::Accepted;
        assert!(matches!(
            quality_gate(&done, &fixed(0.9), 0.5, &Overrides::default()),
            Err(GateError::NotPending(_))
        ));
    }

    #[test]
    fn review_queue_file() {
        let dir = tempfile::tempdir().unwrap();
        let q = dir.path().join("review.jsonl");
        let mut pool = Pool::in_memory();
        pool.insert(inst("a")).unwrap();
        let mut b = inst("b");
        b.normalized_key = "other".into();
        pool.insert(b).unwrap();
        let scorer = |i: &PoolInstance| -> Result<f64, String> { Ok(if i.instance_id == "a" { 0.3 } else { 0.9 }) };
        let s = gate_pool(&mut pool, &scorer, 0.5, &Overrides::default(), Some(&q)).unwrap();
        assert_eq!((s.accepted, s.review), (1, 1));
        let body = std::fs::read_to_string(&q).unwrap();
        assert_eq!(body.lines().count(), 1);
        assert!(body.contains("\"instance_id\":\"a\""));
        // a later override resolves the review item
        let o = Overrides::parse("a\taccept\n", "o").unwrap();
        gate_pool(&mut pool, &scorer, 0.5, &o, Some(&q)).unwrap();
        assert_eq!(pool.get("a").unwrap().gate_status, GateStatus::Accepted);
        assert_eq!(std::fs::read_to_string(&q).unwrap(), "");
    }

    #[test]
    fn heuristic_scorer_in_range() {
        let s = HeuristicScorer::default().score(&inst("a")).unwrap();
        // 17 chars of 200, full disease coverage
        assert!((s - (0.5 * 17.0 / 200.0 + 0.5)).abs() < 1e-12);
    }
}
