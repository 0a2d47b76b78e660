//! Vision-model abstraction: a uniform query interface over the five disease
//! classifiers and four lesion segmenters.

mod oracle;
mod remote;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use crate::raster::{LesionMask, ProbRaster};
use crate::task::{TaskId, TaskKind};
pub use oracle::{load_oracle, OracleBackend};
pub use remote::{RemoteBackend, RemoteConfig};

/// Probabilities must sum to one within this tolerance.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("manifest-not-found: {}", .0.display())]
    ManifestNotFound(PathBuf),
    #[error("parse error at {}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("case-unknown: {0}")]
    CaseUnknown(String),
    #[error("task-kind mismatch: {task} is not a {expected} task")]
    TaskKindMismatch { task: TaskId, expected: TaskKind },
    #[error("task {task}: expected {expected} classes, got {got}")]
    Arity { task: TaskId, expected: usize, got: usize },
    #[error("task {task}: invalid probabilities: {msg}")]
    InvalidProbs { task: TaskId, msg: String },
    #[error("dims-mismatch: expected {}x{}, got {}x{}", expected.0, expected.1, got.0, got.1)]
    DimsMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("backend-unavailable after {retries} retries: {detail}")]
    BackendUnavailable { retries: u32, detail: String },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl InferenceError {
    pub fn is_backend_failure(&self) -> bool {
        matches!(self, InferenceError::BackendUnavailable { .. })
    }
}

/// One classifier's verdict for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOutcome {
    pub task: TaskId,
    pub probs: Vec<f64>,
    pub label_index: usize,
    pub label_name: String,
}

impl ClassOutcome {
    /// Validates arity, range and normalization, then takes the argmax
    /// (lowest index wins ties).
    pub fn from_probs(task: TaskId, probs: Vec<f64>) -> Result<Self, InferenceError> {
        if !task.is_classification() {
            return Err(InferenceError::TaskKindMismatch {
                task,
                expected: TaskKind::Classification,
            });
        }
        if probs.len() != task.class_count() {
            return Err(InferenceError::Arity {
                task,
                expected: task.class_count(),
                got: probs.len(),
            });
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(InferenceError::InvalidProbs {
                task,
                msg: format!("{p} outside [0, 1]"),
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(InferenceError::InvalidProbs {
                task,
                msg: format!("sum {sum} differs from 1"),
            });
        }
        let label_index = argmax_lowest(&probs);
        Ok(Self {
            task,
            label_name: task.class_labels()[label_index].to_string(),
            probs,
            label_index,
        })
    }

    /// True for any non-normal label.
    pub fn is_positive(&self) -> bool {
        self.label_index != 0
    }

    pub fn confidence(&self) -> f64 {
        self.probs[self.label_index]
    }
}

fn argmax_lowest(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Source of raw model outputs. Implementations are immutable after
/// construction and shareable across worker threads.
pub trait Backend: Send + Sync {
    /// Raw class probabilities for a classification task.
    fn class_probs(&self, case_id: &str, task: TaskId) -> Result<Vec<f64>, InferenceError>;

    /// Raw probability raster for a segmentation task.
    fn seg_raster(&self, case_id: &str, lesion: TaskId) -> Result<ProbRaster, InferenceError>;
}

pub fn classify(backend: &dyn Backend, case_id: &str, task: TaskId) -> Result<ClassOutcome, InferenceError> {
    if !task.is_classification() {
        return Err(InferenceError::TaskKindMismatch {
            task,
            expected: TaskKind::Classification,
        });
    }
    let probs = backend.class_probs(case_id, task)?;
    ClassOutcome::from_probs(task, probs)
}

/// Fetches the lesion raster and binarizes it at 0.5 (inclusive). `dims` is
/// the `(width, height)` of the case record the raster must match.
pub fn segment(
    backend: &dyn Backend,
    case_id: &str,
    lesion: TaskId,
    dims: (u32, u32),
) -> Result<LesionMask, InferenceError> {
    if lesion.is_classification() {
        return Err(InferenceError::TaskKindMismatch {
            task: lesion,
            expected: TaskKind::Segmentation,
        });
    }
    let raster = backend.seg_raster(case_id, lesion)?;
    if (raster.width, raster.height) != dims {
        return Err(InferenceError::DimsMismatch {
            expected: dims,
            got: (raster.width, raster.height),
        });
    }
    Ok(raster.binarize(lesion))
}
