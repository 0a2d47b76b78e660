//! File-backed backend answering from precomputed prediction sidecars.
//!
//! The manifest is a TSV with columns `case_id`, `task`, `sidecar_path`
//! (relative paths resolve against the manifest's directory). A leading
//! header row and `#` comment lines are skipped. Classification sidecars hold
//! whitespace-separated decimal probabilities; segmentation sidecars are
//! plain PGM rasters.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use super::{Backend, ClassOutcome, InferenceError, ProbRaster};
use crate::task::TaskId;

#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    probs: HashMap<(String, TaskId), Vec<f64>>,
    rasters: HashMap<(String, TaskId), ProbRaster>,
    cases: BTreeSet<String>,
}

/// Loads and validates every sidecar named by the manifest.
pub fn load_oracle(manifest_path: &Path) -> Result<OracleBackend, InferenceError> {
    let text = match fs::read_to_string(manifest_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(InferenceError::ManifestNotFound(manifest_path.to_path_buf()))
        }
        Err(source) => {
            return Err(InferenceError::Io {
                path: manifest_path.to_path_buf(),
                source,
            })
        }
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut backend = OracleBackend::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let parse_err = |msg: String| InferenceError::Parse {
            path: manifest_path.to_path_buf(),
            line,
            msg,
        };
        let row = raw.trim_end_matches('\r');
        if row.trim().is_empty() || row.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = row.split('\t').collect();
        if idx == 0 && cols.first() == Some(&"case_id") {
            continue;
        }
        let [case_id, task, sidecar] = cols[..] else {
            return Err(parse_err(format!("expected 3 tab-separated columns, got {}", cols.len())));
        };
        if case_id.is_empty() {
            return Err(parse_err("empty case_id".into()));
        }
        let task: TaskId = task.parse().map_err(|e: crate::task::UnknownTask| parse_err(e.to_string()))?;
        let sidecar_path = resolve(base, sidecar);
        let body = fs::read_to_string(&sidecar_path)
            .map_err(|e| parse_err(format!("cannot read sidecar {}: {e}", sidecar_path.display())))?;
        let key = (case_id.to_string(), task);
        if backend.probs.contains_key(&key) || backend.rasters.contains_key(&key) {
            return Err(parse_err(format!("duplicate entry for case {case_id} task {task}")));
        }
        if task.is_classification() {
            let probs = parse_probs(&body).map_err(&parse_err)?;
            ClassOutcome::from_probs(task, probs.clone()).map_err(|e| match e {
                InferenceError::Arity { expected, got, .. } => {
                    parse_err(format!("expected {expected} classes, got {got}"))
                }
                other => parse_err(other.to_string()),
            })?;
            backend.probs.insert(key, probs);
        } else {
            let raster = ProbRaster::parse_pgm(&body)
                .map_err(|e| parse_err(format!("sidecar {}: {e}", sidecar_path.display())))?;
            backend.rasters.insert(key, raster);
        }
        backend.cases.insert(case_id.to_string());
    }
    Ok(backend)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parse_probs(body: &str) -> Result<Vec<f64>, String> {
    body.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map_err(|_| format!("invalid probability '{t}'")))
        .collect()
}

impl OracleBackend {
    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.cases.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.probs.len() + self.rasters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Backend for OracleBackend {
    fn class_probs(&self, case_id: &str, task: TaskId) -> Result<Vec<f64>, InferenceError> {
        self.probs
            .get(&(case_id.to_string(), task))
            .cloned()
            .ok_or_else(|| InferenceError::CaseUnknown(case_id.to_string()))
    }

    fn seg_raster(&self, case_id: &str, lesion: TaskId) -> Result<ProbRaster, InferenceError> {
        self.rasters
            .get(&(case_id.to_string(), lesion))
            .cloned()
            .ok_or_else(|| InferenceError::CaseUnknown(case_id.to_string()))
    }
}
