//! The persistent instance pool: an append-only JSONL log whose last record
//! per `instance_id` wins, with compaction to one record per instance.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use super::dedup::trigrams;
use super::{ForgeError, GateStatus, PoolInstance};
use crate::store::JsonlLog;

#[derive(Debug, Default)]
pub struct Pool {
    instances: BTreeMap<String, PoolInstance>,
    keys: HashMap<String, String>,
    grams: BTreeMap<String, HashSet<String>>,
    log: Option<JsonlLog<PoolInstance>>,
    log_records: usize,
}

impl Pool {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a pool backed by `path`, replaying its log.
    pub fn open(path: &Path) -> Result<Self, ForgeError> {
        let log = JsonlLog::new(path);
        let records = log.read_all()?;
        let mut pool = Self {
            log_records: records.len(),
            ..Self::default()
        };
        for r in records {
            pool.index(r);
        }
        pool.log = Some(log);
        Ok(pool)
    }

    fn index(&mut self, inst: PoolInstance) {
        if let Some(old) = self.instances.get(&inst.instance_id) {
            self.keys.remove(&old.normalized_key);
        }
        self.keys.insert(inst.normalized_key.clone(), inst.instance_id.clone());
        self.grams
            .insert(inst.instance_id.clone(), trigrams(&inst.normalized_key));
        self.instances.insert(inst.instance_id.clone(), inst);
    }

    fn persist(&mut self, inst: &PoolInstance) -> Result<(), ForgeError> {
        if let Some(log) = &self.log {
            log.append(inst)?;
            self.log_records += 1;
        }
        Ok(())
    }

    /// Adds a new instance. Ids must be unique.
    pub fn insert(&mut self, inst: PoolInstance) -> Result<(), ForgeError> {
        if self.instances.contains_key(&inst.instance_id) {
            return Err(ForgeError::Invalid(format!("duplicate instance_id {}", inst.instance_id)));
        }
        self.persist(&inst)?;
        self.index(inst);
        Ok(())
    }

    /// Replaces an existing instance (e.g. after gating).
    pub fn update(&mut self, inst: PoolInstance) -> Result<(), ForgeError> {
        if !self.instances.contains_key(&inst.instance_id) {
            return Err(ForgeError::Invalid(format!("unknown instance_id {}", inst.instance_id)));
        }
        if self.instances.get(&inst.instance_id) == Some(&inst) {
            return Ok(());
        }
        self.persist(&inst)?;
        self.index(inst);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PoolInstance> {
        self.instances.get(id)
    }

    pub fn find_key(&self, normalized_key: &str) -> Option<&str> {
        self.keys.get(normalized_key).map(String::as_str)
    }

    pub(crate) fn gram_sets(&self) -> impl Iterator<Item = (&str, &HashSet<String>)> {
        self.grams.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Instances ordered by `instance_id`.
    pub fn instances(&self) -> impl Iterator<Item = &PoolInstance> {
        self.instances.values()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn count(&self, status: GateStatus) -> usize {
        self.instances.values().filter(|i| i.gate_status == status).count()
    }

    /// Records in the backing log, including superseded ones.
    pub fn log_records(&self) -> usize {
        self.log_records
    }

    /// Rewrites the backing log with one record per instance.
    pub fn compact(&mut self) -> Result<(), ForgeError> {
        if let Some(log) = &self.log {
            let all: Vec<PoolInstance> = self.instances.values().cloned().collect();
            log.rewrite(&all)?;
            self.log_records = all.len();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{InstanceKind, Provenance};

    fn inst(id: &str, key: &str) -> PoolInstance {
        PoolInstance {
            instance_id: id.into(),
            kind: InstanceKind::Conversation,
            prompt_text: key.into(),
            response_text: "r".into(),
            disease: "glaucoma".into(),
            scenario: None,
            provenance: Provenance::Dialogue,
            source_id: "md-1".into(),
            gate_status: GateStatus::Pending,
            normalized_key: key.into(),
            score: None,
        }
    }

    #[test]
    fn replay_last_write_wins_and_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        {
            let mut p = Pool::open(&path).unwrap();
            p.insert(inst("a", "k1")).unwrap();
            p.insert(inst("b", "k2")).unwrap();
            let mut a = p.get("a").unwrap().clone();
            a.gate_status = GateStatus::Accepted;
            p.update(a).unwrap();
            assert!(p.insert(inst("a", "k3")).is_err());
        }
        let mut p = Pool::open(&path).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.log_records(), 3);
        assert_eq!(p.get("a").unwrap().gate_status, GateStatus::Accepted);
        p.compact().unwrap();
        let p = Pool::open(&path).unwrap();
        assert_eq!(p.log_records(), 2);
        assert_eq!(p.count(GateStatus::Accepted), 1);
        assert_eq!(p.find_key("k2"), Some("b"));
    }
}
