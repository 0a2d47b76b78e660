//! Exact and near-duplicate detection over normalized instance keys.
//!
//! Near duplicates are measured by Jaccard similarity of character 3-gram
//! sets. Strings shorter than three characters contribute the whole string
//! as their only gram, so every non-empty text has similarity 1 with itself.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::pool::Pool;
use super::PoolInstance;

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.9;

pub fn trigrams(s: &str) -> HashSet<String> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() < 3 {
        return if chars.is_empty() {
            HashSet::new()
        } else {
            HashSet::from([s.to_string()])
        };
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Jaccard similarity of two gram sets; two empty sets count as identical.
pub fn jaccard_sets(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|g| large.contains(*g)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub fn jaccard(a: &str, b: &str) -> f64 {
    jaccard_sets(&trigrams(a), &trigrams(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum DedupDecision {
    Accept,
    RejectExact { matched: String },
    RejectNear { matched: String, similarity: f64 },
}

impl DedupDecision {
    pub fn is_accept(&self) -> bool {
        matches!(self, DedupDecision::Accept)
    }

    pub fn matched(&self) -> Option<&str> {
        match self {
            DedupDecision::Accept => None,
            DedupDecision::RejectExact { matched } | DedupDecision::RejectNear { matched, .. } => Some(matched),
        }
    }
}

/// Rejects on an exact normalized-key match, else on the most similar pool
/// instance when its similarity reaches `threshold`.
pub fn dedup(pool: &Pool, candidate: &PoolInstance, threshold: f64) -> DedupDecision {
    if let Some(id) = pool.find_key(&candidate.normalized_key) {
        return DedupDecision::RejectExact { matched: id.to_string() };
    }
    let grams = trigrams(&candidate.normalized_key);
    let mut best: Option<(&str, f64)> = None;
    for (id, other) in pool.gram_sets() {
        let sim = jaccard_sets(&grams, other);
        if sim >= threshold && best.is_none_or(|(_, b)| sim > b) {
            best = Some((id, sim));
        }
    }
    match best {
        Some((id, similarity)) => DedupDecision::RejectNear {
            matched: id.to_string(),
            similarity,
        },
        None => DedupDecision::Accept,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupSummary {
    pub accepted: usize,
    pub rejected_exact: usize,
    pub rejected_near: usize,
}

impl DedupSummary {
    pub fn rejected(&self) -> usize {
        self.rejected_exact + self.rejected_near
    }
}

/// Dedups each candidate against the pool (including candidates appended
/// earlier in the same call) and appends the survivors.
pub fn dedup_and_append(
    pool: &mut Pool,
    candidates: Vec<PoolInstance>,
    threshold: f64,
) -> Result<DedupSummary, super::ForgeError> {
    let mut summary = DedupSummary::default();
    for c in candidates {
        match dedup(pool, &c, threshold) {
            DedupDecision::Accept => {
                pool.insert(c)?;
                summary.accepted += 1;
            }
            DedupDecision::RejectExact { matched } => {
                tracing::debug!(candidate = %c.instance_id, %matched, "exact duplicate");
                summary.rejected_exact += 1;
            }
            DedupDecision::RejectNear { matched, similarity } => {
                tracing::debug!(candidate = %c.instance_id, %matched, similarity, "near duplicate");
                summary.rejected_near += 1;
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{GateStatus, InstanceKind, Provenance};
    use proptest::prelude::*;

    fn inst(id: &str, text: &str) -> PoolInstance {
        PoolInstance {
            instance_id: id.into(),
            kind: InstanceKind::Instruction,
            prompt_text: text.into(),
            response_text: String::new(),
            disease: "AMD".into(),
            scenario: None,
            provenance: Provenance::Knowledge,
            source_id: "src".into(),
            gate_status: GateStatus::Pending,
            normalized_key: crate::forge::normalize(text),
            score: None,
        }
    }

    #[test]
    fn hand_enumerated_trigram_example() {
        assert_eq!(trigrams("abcd"), HashSet::from(["abc".into(), "bcd".into()]));
        assert_eq!(trigrams("abce"), HashSet::from(["abc".into(), "bce".into()]));
        assert!((jaccard("abcd", "abce") - 1.0 / 3.0).abs() < 1e-15);
        let mut pool = Pool::in_memory();
        pool.insert(inst("a", "abcd")).unwrap();
        assert_eq!(dedup(&pool, &inst("b", "abce"), 0.9), DedupDecision::Accept);
    }

    #[test]
    fn exact_match_after_normalization() {
        let mut pool = Pool::in_memory();
        pool.insert(inst("a", "What is   AMD?")).unwrap();
        assert_eq!(
            dedup(&pool, &inst("b", "what is amd?"), 0.9),
            DedupDecision::RejectExact { matched: "a".into() }
        );
    }

    #[test]
    fn empty_pool_accepts() {
        assert!(dedup(&Pool::in_memory(), &inst("a", "anything"), 0.9).is_accept());
    }

    #[test]
    fn near_duplicate_rejected_with_match() {
        let base = "age related macular degeneration is a chronic disease of the macula in older adults";
        let mut pool = Pool::in_memory();
        pool.insert(inst("a", base)).unwrap();
        let d = dedup(&pool, &inst("b", &format!("{base}!")), 0.9);
        assert!(matches!(d, DedupDecision::RejectNear { ref matched, similarity } if matched == "a" && similarity >= 0.9));
    }

    #[test]
    fn append_is_idempotent() {
        let cands = vec![inst("a", "first text here"), inst("b", "second one there"), inst("c", "FIRST text here")];
        let mut pool = Pool::in_memory();
        let s1 = dedup_and_append(&mut pool, cands.clone(), 0.9).unwrap();
        assert_eq!((s1.accepted, s1.rejected_exact), (2, 1));
        let snapshot: Vec<_> = pool.instances().cloned().collect();
        let s2 = dedup_and_append(&mut pool, cands, 0.9).unwrap();
        assert_eq!(s2.accepted, 0);
        assert_eq!(pool.instances().cloned().collect::<Vec<_>>(), snapshot);
    }

    proptest! {
        #[test]
        fn jaccard_symmetric_and_reflexive(a in "[a-c ]{0,12}", b in "[a-c ]{0,12}") {
            prop_assert_eq!(jaccard(&a, &b), jaccard(&b, &a));
            let j = jaccard(&a, &b);
            prop_assert!((0.0..=1.0).contains(&j));
            if !a.is_empty() {
                prop_assert_eq!(jaccard(&a, &a), 1.0);
            }
        }
    }
}
