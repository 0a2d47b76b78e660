use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The nine vision tasks: five disease classifiers and four lesion segmenters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    DrGrading,
    Amd,
    Glaucoma,
    PathologicalMyopia,
    Tumor,
    Ex,
    Se,
    Ma,
    He,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Segmentation,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::Segmentation => "segmentation",
        })
    }
}

const DR_LABELS: [&str; 5] = ["normal", "mild NPDR", "moderate NPDR", "severe NPDR", "PDR"];

impl TaskId {
    pub const ALL: [TaskId; 9] = [
        TaskId::DrGrading,
        TaskId::Amd,
        TaskId::Glaucoma,
        TaskId::PathologicalMyopia,
        TaskId::Tumor,
        TaskId::Ex,
        TaskId::Se,
        TaskId::Ma,
        TaskId::He,
    ];

    pub const CLASSIFICATION: [TaskId; 5] = [
        TaskId::DrGrading,
        TaskId::Amd,
        TaskId::Glaucoma,
        TaskId::PathologicalMyopia,
        TaskId::Tumor,
    ];

    pub const SEGMENTATION: [TaskId; 4] = [TaskId::Ex, TaskId::Se, TaskId::Ma, TaskId::He];

    pub fn kind(self) -> TaskKind {
        match self {
            TaskId::Ex | TaskId::Se | TaskId::Ma | TaskId::He => TaskKind::Segmentation,
            _ => TaskKind::Classification,
        }
    }

    pub fn is_classification(self) -> bool {
        self.kind() == TaskKind::Classification
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::DrGrading => "dr_grading",
            TaskId::Amd => "amd",
            TaskId::Glaucoma => "glaucoma",
            TaskId::PathologicalMyopia => "pathological_myopia",
            TaskId::Tumor => "tumor",
            TaskId::Ex => "ex",
            TaskId::Se => "se",
            TaskId::Ma => "ma",
            TaskId::He => "he",
        }
    }

    /// Number of output classes; zero for segmentation tasks.
    pub fn class_count(self) -> usize {
        match self {
            TaskId::DrGrading => 5,
            t if t.is_classification() => 2,
            _ => 0,
        }
    }

    /// Class names indexed by label. Binary tasks are `[normal, disease]`.
    pub fn class_labels(self) -> &'static [&'static str] {
        match self {
            TaskId::DrGrading => &DR_LABELS,
            TaskId::Amd => &["normal", "AMD"],
            TaskId::Glaucoma => &["normal", "glaucoma"],
            TaskId::PathologicalMyopia => &["normal", "pathological myopia"],
            TaskId::Tumor => &["normal", "fundus tumor"],
            _ => &[],
        }
    }

    /// Human-readable name used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            TaskId::DrGrading => "diabetic retinopathy",
            TaskId::Amd => "AMD",
            TaskId::Glaucoma => "glaucoma",
            TaskId::PathologicalMyopia => "pathological myopia",
            TaskId::Tumor => "fundus tumor",
            TaskId::Ex => "hard exudates",
            TaskId::Se => "soft exudates",
            TaskId::Ma => "microaneurysms",
            TaskId::He => "hemorrhages",
        }
    }

    /// Upper-case lesion abbreviation (`EX`, `SE`, ...); empty for classifiers.
    pub fn lesion_code(self) -> &'static str {
        match self {
            TaskId::Ex => "EX",
            TaskId::Se => "SE",
            TaskId::Ma => "MA",
            TaskId::He => "HE",
            _ => "",
        }
    }

    /// Row name in the pipeline performance table.
    pub fn algorithm_name(self) -> &'static str {
        match self {
            TaskId::DrGrading => "DR_class_model",
            TaskId::Glaucoma => "Glaucoma_class_model",
            TaskId::PathologicalMyopia => "PALM_class_model",
            TaskId::Amd => "AMD_class_model",
            TaskId::Tumor => "Tumor_class_model",
            TaskId::Ex => "EX_seg_model",
            TaskId::He => "HE_seg_model",
            TaskId::Ma => "MA_seg_model",
            TaskId::Se => "SE_seg_model",
        }
    }

    /// Row order of the pipeline performance table.
    pub const TABLE_ORDER: [TaskId; 9] = [
        TaskId::DrGrading,
        TaskId::Glaucoma,
        TaskId::PathologicalMyopia,
        TaskId::Amd,
        TaskId::Tumor,
        TaskId::Ex,
        TaskId::He,
        TaskId::Ma,
        TaskId::Se,
    ];
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task '{0}'")]
pub struct UnknownTask(pub String);

impl FromStr for TaskId {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTask(s.to_string()))
    }
}
