//! Runs the nine vision tasks for one fundus case and folds their results
//! into [`DiagnosisFindings`].

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::inference::{classify, segment, Backend, ClassOutcome, InferenceError, LesionMask};
use crate::task::TaskId;

pub const DEFAULT_PRESENCE_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FundusCase {
    pub case_id: String,
    /// Path or opaque handle of the image; never opened by the pipeline.
    pub image_ref: String,
    pub width: u32,
    pub height: u32,
}

impl FundusCase {
    pub fn new(
        case_id: impl Into<String>,
        image_ref: impl Into<String>,
        width: u32,
        height: u32,
    ) -> Result<Self, PipelineError> {
        let case = Self {
            case_id: case_id.into(),
            image_ref: image_ref.into(),
            width,
            height,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.case_id.trim().is_empty() {
            return Err(PipelineError::InvalidCase("case_id is empty".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(PipelineError::InvalidCase(format!(
                "case {}: dimensions must be positive, got {}x{}",
                self.case_id, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionSummary {
    pub lesion: TaskId,
    pub present: bool,
    pub pixel_count: u64,
    pub area_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisFindings {
    pub case_id: String,
    pub classifications: Vec<ClassOutcome>,
    pub lesions: Vec<LesionSummary>,
    pub produced_at: DateTime<Utc>,
}

impl DiagnosisFindings {
    pub fn classification(&self, task: TaskId) -> Option<&ClassOutcome> {
        self.classifications.iter().find(|c| c.task == task)
    }

    pub fn lesion(&self, lesion: TaskId) -> Option<&LesionSummary> {
        self.lesions.iter().find(|l| l.lesion == lesion)
    }

    /// Tasks that are missing or appear more than once.
    pub fn completeness_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for t in TaskId::CLASSIFICATION {
            match self.classifications.iter().filter(|c| c.task == t).count() {
                1 => {}
                0 => problems.push(format!("missing {t}")),
                n => problems.push(format!("{t} appears {n} times")),
            }
        }
        for t in TaskId::SEGMENTATION {
            match self.lesions.iter().filter(|l| l.lesion == t).count() {
                1 => {}
                0 => problems.push(format!("missing {t}")),
                n => problems.push(format!("{t} appears {n} times")),
            }
        }
        if self.classifications.iter().any(|c| !c.task.is_classification())
            || self.lesions.iter().any(|l| l.lesion.is_classification())
        {
            problems.push("task listed under the wrong kind".into());
        }
        problems
    }

    pub fn is_complete(&self) -> bool {
        self.completeness_problems().is_empty()
    }

    /// SHA-256 over the canonical JSON of everything except `produced_at`.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            case_id: &'a str,
            classifications: &'a [ClassOutcome],
            lesions: &'a [LesionSummary],
        }
        let json = serde_json::to_vec(&Canonical {
            case_id: &self.case_id,
            classifications: &self.classifications,
            lesions: &self.lesions,
        })
        .expect("findings serialize");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub presence_threshold: f64,
    /// Per-task switches; tasks absent from the map are enabled.
    pub enabled: BTreeMap<TaskId, bool>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            presence_threshold: DEFAULT_PRESENCE_THRESHOLD,
            enabled: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn is_enabled(&self, task: TaskId) -> bool {
        self.enabled.get(&task).copied().unwrap_or(true)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("task {task}: {source}")]
    Task {
        task: TaskId,
        #[source]
        source: InferenceError,
    },
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("dims-mismatch: mask is {}x{}, case is {}x{}", mask.0, mask.1, case.0, case.1)]
    DimsMismatch { mask: (u32, u32), case: (u32, u32) },
    #[error("invalid presence threshold {0}")]
    InvalidThreshold(f64),
    #[error("case list {path}:{line}: {msg}")]
    CaseList { path: String, line: usize, msg: String },
}

impl PipelineError {
    pub fn is_backend_failure(&self) -> bool {
        matches!(self, PipelineError::Task { source, .. } if source.is_backend_failure())
    }
}

pub fn summarize_lesion(
    mask: &LesionMask,
    case: &FundusCase,
    presence_threshold: f64,
) -> Result<LesionSummary, PipelineError> {
    if mask.dims() != case.dims() {
        return Err(PipelineError::DimsMismatch {
            mask: mask.dims(),
            case: case.dims(),
        });
    }
    let pixel_count = mask.pixel_count();
    let area_fraction = pixel_count as f64 / case.area() as f64;
    Ok(LesionSummary {
        lesion: mask.lesion,
        present: area_fraction >= presence_threshold,
        pixel_count,
        area_fraction,
    })
}

enum TaskResult {
    Class(ClassOutcome),
    Lesion(LesionSummary),
}

pub fn run_diagnosis(
    case: &FundusCase,
    backend: &dyn Backend,
    config: &PipelineConfig,
) -> Result<DiagnosisFindings, PipelineError> {
    run_diagnosis_ordered(case, backend, config, &TaskId::ALL)
}

/// Like [`run_diagnosis`] but spawns the task workers in `order`. The result
/// does not depend on `order`; it exists so that property can be tested.
pub fn run_diagnosis_ordered(
    case: &FundusCase,
    backend: &dyn Backend,
    config: &PipelineConfig,
    order: &[TaskId],
) -> Result<DiagnosisFindings, PipelineError> {
    case.validate()?;
    if !(0.0..=1.0).contains(&config.presence_threshold) {
        return Err(PipelineError::InvalidThreshold(config.presence_threshold));
    }
    let mut seen = HashSet::new();
    let tasks: Vec<TaskId> = order
        .iter()
        .copied()
        .filter(|t| config.is_enabled(*t) && seen.insert(*t))
        .collect();

    let results: BTreeMap<TaskId, Result<TaskResult, PipelineError>> = std::thread::scope(|s| {
        let handles: Vec<_> = tasks
            .iter()
            .map(|&task| (task, s.spawn(move || run_task(case, backend, config, task))))
            .collect();
        handles
            .into_iter()
            .map(|(task, h)| (task, h.join().expect("task worker panicked")))
            .collect()
    });

    let mut classifications = Vec::new();
    let mut lesions = Vec::new();
    // BTreeMap iteration is in TaskId order, so the first error reported is
    // independent of completion order.
    for (_, result) in results {
        match result? {
            TaskResult::Class(c) => classifications.push(c),
            TaskResult::Lesion(l) => lesions.push(l),
        }
    }
    Ok(DiagnosisFindings {
        case_id: case.case_id.clone(),
        classifications,
        lesions,
        produced_at: Utc::now(),
    })
}

fn run_task(
    case: &FundusCase,
    backend: &dyn Backend,
    config: &PipelineConfig,
    task: TaskId,
) -> Result<TaskResult, PipelineError> {
    let wrap = |source| PipelineError::Task { task, source };
    if task.is_classification() {
        classify(backend, &case.case_id, task).map(TaskResult::Class).map_err(wrap)
    } else {
        let mask = segment(backend, &case.case_id, task, case.dims()).map_err(wrap)?;
        summarize_lesion(&mask, case, config.presence_threshold).map(TaskResult::Lesion)
    }
}

/// Reads a batch case list: TSV with columns `case_id`, `image_path`,
/// `width`, `height` and an optional header row.
pub fn read_case_list(path: &Path) -> Result<Vec<FundusCase>, PipelineError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::CaseList {
        path: shown.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut cases = Vec::new();
    let mut ids = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |msg: String| PipelineError::CaseList {
            path: shown.clone(),
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
        let [id, image, w, h] = cols[..] else {
            return Err(err(format!("expected 4 tab-separated columns, got {}", cols.len())));
        };
        let width: u32 = w.trim().parse().map_err(|_| err(format!("invalid width '{w}'")))?;
        let height: u32 = h.trim().parse().map_err(|_| err(format!("invalid height '{h}'")))?;
        let case = FundusCase::new(id, image, width, height).map_err(|e| err(e.to_string()))?;
        if !ids.insert(case.case_id.clone()) {
            return Err(err(format!("duplicate case_id {id}")));
        }
        cases.push(case);
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ProbRaster;
    use proptest::prelude::*;

    struct Fixed {
        dr: Vec<f64>,
        binary: Vec<f64>,
        raster: ProbRaster,
        missing: Option<TaskId>,
    }

    impl Backend for Fixed {
        fn class_probs(&self, case_id: &str, task: TaskId) -> Result<Vec<f64>, InferenceError> {
            if self.missing == Some(task) {
                return Err(InferenceError::CaseUnknown(case_id.into()));
            }
            Ok(if task == TaskId::DrGrading { self.dr.clone() } else { self.binary.clone() })
        }
        fn seg_raster(&self, case_id: &str, lesion: TaskId) -> Result<ProbRaster, InferenceError> {
            if self.missing == Some(lesion) {
                return Err(InferenceError::CaseUnknown(case_id.into()));
            }
            Ok(self.raster.clone())
        }
    }

    fn fixed(missing: Option<TaskId>) -> Fixed {
        Fixed {
            dr: vec![0.0, 0.05, 0.05, 0.1, 0.8],
            binary: vec![0.9, 0.1],
            raster: ProbRaster::new(4, 2, vec![0.0; 8]).unwrap(),
            missing,
        }
    }

    fn case() -> FundusCase {
        FundusCase::new("c1", "c1.png", 4, 2).unwrap()
    }

    #[test]
    fn pdr_and_all_normal() {
        let f = run_diagnosis(&case(), &fixed(None), &PipelineConfig::default()).unwrap();
        assert!(f.is_complete());
        assert_eq!(f.classification(TaskId::DrGrading).unwrap().label_name, "PDR");
        for t in &TaskId::CLASSIFICATION[1..] {
            assert_eq!(f.classification(*t).unwrap().label_name, "normal");
        }
        for l in &f.lesions {
            assert!(!l.present);
            assert_eq!(l.pixel_count, 0);
        }
    }

    #[test]
    fn failure_names_task_and_returns_nothing_partial() {
        let e = run_diagnosis(&case(), &fixed(Some(TaskId::Tumor)), &PipelineConfig::default()).unwrap_err();
        assert!(e.to_string().starts_with("task tumor: case-unknown"), "{e}");
    }

    #[test]
    fn summarize_counts_and_boundary() {
        let c = FundusCase::new("big", "x", 1000, 1000).unwrap();
        let mut bits = vec![0u8; 1_000_000];
        for i in (0..1_000_000).step_by(5000) {
            bits[i] = 1;
        }
        let m = LesionMask::new(TaskId::Ex, 1000, 1000, bits).unwrap();
        let s = summarize_lesion(&m, &c, 1e-4).unwrap();
        assert_eq!(s.pixel_count, 200);
        assert_eq!(s.area_fraction, 2.0e-4);
        assert!(s.present);
        // exactly at threshold counts as present
        assert!(summarize_lesion(&m, &c, 2.0e-4).unwrap().present);
        let z = LesionMask::zeros(TaskId::Ex, 1000, 1000);
        let s = summarize_lesion(&z, &c, 1e-4).unwrap();
        assert!(!s.present);
        assert_eq!(s.area_fraction, 0.0);
        assert!(matches!(
            summarize_lesion(&LesionMask::zeros(TaskId::Ex, 2, 2), &c, 1e-4),
            Err(PipelineError::DimsMismatch { .. })
        ));
    }

    #[test]
    fn invalid_cases_rejected() {
        assert!(FundusCase::new("", "x", 1, 1).is_err());
        assert!(FundusCase::new("a", "x", 0, 1).is_err());
    }

    #[test]
    fn disabled_task_is_skipped() {
        let mut cfg = PipelineConfig::default();
        cfg.enabled.insert(TaskId::Tumor, false);
        let f = run_diagnosis(&case(), &fixed(Some(TaskId::Tumor)), &cfg).unwrap();
        assert!(!f.is_complete());
        assert!(f.classification(TaskId::Tumor).is_none());
    }

    #[test]
    fn digest_ignores_timestamp_and_tracks_content() {
        let be = fixed(None);
        let a = run_diagnosis(&case(), &be, &PipelineConfig::default()).unwrap();
        let b = run_diagnosis(&case(), &be, &PipelineConfig::default()).unwrap();
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.lesions[0].pixel_count += 1;
        assert_ne!(a.digest(), c.digest());
    }

    proptest! {
        #[test]
        fn area_fraction_bounded_and_presence_monotone(
            bits in proptest::collection::vec(0u8..2, 12),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let c = FundusCase::new("p", "x", 4, 3).unwrap();
            let m = LesionMask::new(TaskId::Ma, 4, 3, bits).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = summarize_lesion(&m, &c, lo).unwrap();
            let b = summarize_lesion(&m, &c, hi).unwrap();
            prop_assert!((0.0..=1.0).contains(&a.area_fraction));
            prop_assert!(!b.present || a.present);
        }

        #[test]
        fn order_independent(perm in Just(TaskId::ALL.to_vec()).prop_shuffle()) {
            let be = fixed(None);
            let cfg = PipelineConfig::default();
            let mut a = run_diagnosis(&case(), &be, &cfg).unwrap();
            let b = run_diagnosis_ordered(&case(), &be, &cfg, &perm).unwrap();
            a.produced_at = b.produced_at;
            prop_assert_eq!(a, b);
        }
    }
}
