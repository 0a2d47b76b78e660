//! Classification accuracy, Dice overlap, and the per-model evaluation table.
//!
//! Dice is `2|X ∩ Y| / (|X| + |Y|)` over foreground pixels. When both masks
//! are empty the ratio is 0/0; it is defined here as 1.0 so a correctly
//! predicted lesion-free image scores perfectly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::raster::{LesionMask, ProbRaster};
use crate::task::TaskId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("undefined-metric: {0}")]
    Undefined(&'static str),
    #[error("shape error: {0} predictions vs {1} labels")]
    Shape(usize, usize),
    #[error("dims-mismatch: {}x{} vs {}x{}", .0.0, .0.1, .1.0, .1.1)]
    DimsMismatch((u32, u32), (u32, u32)),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    /// Counts `(predicted, actual)` binary pairs; any nonzero label is positive.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut c = Self::default();
        for (pred, actual) in pairs {
            match (pred != 0, actual != 0) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// `(TP + TN) / (TP + TN + FP + FN)`.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64, MetricError> {
    let total = c.total();
    if total == 0 {
        return Err(MetricError::Undefined("accuracy of zero samples"));
    }
    // one correctly rounded division of exact integer counts
    Ok((c.tp + c.tn) as f64 / total as f64)
}

pub fn multiclass_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::Shape(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricError::Undefined("accuracy of zero samples"));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

pub fn dice(x: &LesionMask, y: &LesionMask) -> Result<f64, MetricError> {
    if x.dims() != y.dims() {
        return Err(MetricError::DimsMismatch(x.dims(), y.dims()));
    }
    let mut inter = 0u64;
    let mut sx = 0u64;
    let mut sy = 0u64;
    for (&a, &b) in x.bitmap.iter().zip(&y.bitmap) {
        let (a, b) = (u64::from(a), u64::from(b));
        inter += a & b;
        sx += a;
        sy += b;
    }
    if sx + sy == 0 {
        return Ok(1.0);
    }
    Ok((2 * inter) as f64 / (sx + sy) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricName {
    Acc,
    Dice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub task: TaskId,
    pub dataset: String,
    pub metric: MetricName,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
}

pub const DEFAULT_DATASET: &str = "default";

impl MetricsTable {
    fn algorithm(row: &MetricRow) -> String {
        if row.dataset == DEFAULT_DATASET {
            row.task.algorithm_name().to_string()
        } else {
            format!("{} ({})", row.task.algorithm_name(), row.dataset)
        }
    }

    /// Aligned text with columns Algorithm Type, Algorithm, Acc, Dice.
    pub fn render_text(&self) -> String {
        let header = ["Algorithm Type", "Algorithm", "Acc", "Dice"];
        let rows: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                let v = format!("{:.3}", r.value);
                let (acc, dice) = match r.metric {
                    MetricName::Acc => (v, "--".to_string()),
                    MetricName::Dice => ("--".to_string(), v),
                };
                [r.task.kind().to_string(), Self::algorithm(r), acc, dice]
            })
            .collect();
        let mut widths = header.map(str::len);
        for r in &rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: [&str; 4]| {
            let joined: Vec<String> = cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", joined.join("  ").trim_end());
        };
        line(header);
        for r in &rows {
            line([&r[0], &r[1], &r[2], &r[3]]);
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("algorithm_type,algorithm,task,dataset,acc,dice,n\n");
        for r in &self.rows {
            let v = format!("{:.3}", r.value);
            let (acc, dice) = match r.metric {
                MetricName::Acc => (v.as_str(), ""),
                MetricName::Dice => ("", v.as_str()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.task.kind(),
                r.task.algorithm_name(),
                r.task,
                r.dataset,
                acc,
                dice,
                r.n
            );
        }
        out
    }

    pub fn value(&self, task: TaskId, dataset: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.task == task && r.dataset == dataset)
            .map(|r| r.value)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("cannot read {}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },
    #[error("case-set mismatch: {}", .0.join("; "))]
    CaseSetMismatch(Vec<String>),
    #[error("task {task}, case {case}: {source}")]
    Metric {
        task: TaskId,
        case: String,
        #[source]
        source: MetricError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunEntry {
    Label(usize),
    Mask(LesionMask),
}

/// Per (task, dataset): case id to label or mask.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub groups: BTreeMap<(TaskId, String), BTreeMap<String, RunEntry>>,
}

impl RunManifest {
    /// Reads a TSV with columns `case_id`, `task`, `label_or_mask` and an
    /// optional fourth `dataset` column. Classification rows hold an integer
    /// label; segmentation rows hold a PGM mask path relative to the manifest.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut m = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: String| EvalError::Parse {
                path: path.to_path_buf(),
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
            let (case, task, value, dataset) = match cols[..] {
                [c, t, v] => (c, t, v, DEFAULT_DATASET),
                [c, t, v, d] => (c, t, v, d),
                _ => return Err(err(format!("expected 3 or 4 tab-separated columns, got {}", cols.len()))),
            };
            if case.is_empty() {
                return Err(err("empty case_id".into()));
            }
            let task: TaskId = task.parse().map_err(|e: crate::task::UnknownTask| err(e.to_string()))?;
            let entry = if task.is_classification() {
                let label: usize = value.trim().parse().map_err(|_| err(format!("invalid label '{value}'")))?;
                if label >= task.class_count() {
                    return Err(err(format!("label {label} out of range for {task}")));
                }
                RunEntry::Label(label)
            } else {
                let p = base.join(value);
                let body = std::fs::read_to_string(&p).map_err(|e| err(format!("cannot read mask {}: {e}", p.display())))?;
                let raster = ProbRaster::parse_pgm(&body).map_err(|e| err(format!("mask {}: {e}", p.display())))?;
                RunEntry::Mask(raster.binarize(task))
            };
            let group = m.groups.entry((task, dataset.to_string())).or_default();
            if group.insert(case.to_string(), entry).is_some() {
                return Err(err(format!("duplicate case {case} for task {task}")));
            }
        }
        Ok(m)
    }
}

pub fn evaluate_run(predictions: &RunManifest, truth: &RunManifest) -> Result<MetricsTable, EvalError> {
    let mut problems = Vec::new();
    let keys: BTreeSet<&(TaskId, String)> = predictions.groups.keys().chain(truth.groups.keys()).collect();
    for key in &keys {
        let empty = BTreeMap::new();
        let p = predictions.groups.get(*key).unwrap_or(&empty);
        let t = truth.groups.get(*key).unwrap_or(&empty);
        let missing_pred: Vec<&str> = t.keys().filter(|c| !p.contains_key(*c)).map(String::as_str).collect();
        let missing_truth: Vec<&str> = p.keys().filter(|c| !t.contains_key(*c)).map(String::as_str).collect();
        if !missing_pred.is_empty() {
            problems.push(format!("{} [{}] missing predictions for {}", key.0, key.1, missing_pred.join(",")));
        }
        if !missing_truth.is_empty() {
            problems.push(format!("{} [{}] missing ground truth for {}", key.0, key.1, missing_truth.join(",")));
        }
    }
    if !problems.is_empty() {
        return Err(EvalError::CaseSetMismatch(problems));
    }

    let mut rows = Vec::new();
    for (task, dataset) in keys {
        let p = &predictions.groups[&(*task, dataset.clone())];
        let t = &truth.groups[&(*task, dataset.clone())];
        let n = t.len();
        let value = if task.is_classification() {
            let mut labels = Vec::with_capacity(n);
            for (case, te) in t {
                match (&p[case], te) {
                    (RunEntry::Label(a), RunEntry::Label(b)) => labels.push((*a, *b)),
                    _ => unreachable!("entry kind follows task kind"),
                }
            }
            let metric_err = |source| EvalError::Metric {
                task: *task,
                case: "*".into(),
                source,
            };
            if task.class_count() == 2 {
                accuracy(&ConfusionCounts::from_pairs(labels)).map_err(metric_err)?
            } else {
                let (pred, actual): (Vec<usize>, Vec<usize>) = labels.into_iter().unzip();
                multiclass_accuracy(&pred, &actual).map_err(metric_err)?
            }
        } else {
            let mut sum = 0.0;
            for (case, te) in t {
                let (RunEntry::Mask(pm), RunEntry::Mask(tm)) = (&p[case], te) else {
                    unreachable!("entry kind follows task kind")
                };
                sum += dice(pm, tm).map_err(|source| EvalError::Metric {
                    task: *task,
                    case: case.clone(),
                    source,
                })?;
            }
            sum / n as f64
        };
        rows.push(MetricRow {
            task: *task,
            dataset: dataset.clone(),
            metric: if task.is_classification() { MetricName::Acc } else { MetricName::Dice },
            value,
            n,
        });
    }
    let order = |t: TaskId| TaskId::TABLE_ORDER.iter().position(|x| *x == t).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| order(a.task).cmp(&order(b.task)).then_with(|| a.dataset.cmp(&b.dataset)));
    Ok(MetricsTable { rows })
}

pub fn evaluate_files(pred: &Path, truth: &Path) -> Result<MetricsTable, EvalError> {
    evaluate_run(&RunManifest::load(pred)?, &RunManifest::load(truth)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> LesionMask {
        LesionMask::new(TaskId::Ex, bits.len() as u32, 1, bits.to_vec()).unwrap()
    }

    #[test]
    fn accuracy_values() {
        assert_eq!(accuracy(&ConfusionCounts { tp: 7, tn: 0, fp: 3, fn_: 0 }).unwrap(), 0.7);
        assert_eq!(accuracy(&ConfusionCounts { tp: 5, tn: 5, fp: 0, fn_: 0 }).unwrap(), 1.0);
        assert!(matches!(accuracy(&ConfusionCounts::default()), Err(MetricError::Undefined(_))));
    }

    #[test]
    fn counts_from_pairs() {
        let c = ConfusionCounts::from_pairs([(1, 1), (0, 1), (1, 0), (0, 0)]);
        assert_eq!(c, ConfusionCounts { tp: 1, tn: 1, fp: 1, fn_: 1 });
        assert_eq!(accuracy(&c).unwrap(), 0.5);
    }

    #[test]
    fn multiclass() {
        assert_eq!(multiclass_accuracy(&[1; 8], &[1; 8]).unwrap(), 1.0);
        assert_eq!(multiclass_accuracy(&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 0]).unwrap(), 0.8);
        assert!(matches!(multiclass_accuracy(&[1], &[1, 2]), Err(MetricError::Shape(1, 2))));
        assert!(matches!(multiclass_accuracy(&[], &[]), Err(MetricError::Undefined(_))));
    }

    #[test]
    fn dice_cases() {
        let x = mask(&[1, 1, 0, 0]);
        assert_eq!(dice(&x, &x).unwrap(), 1.0);
        assert_eq!(dice(&x, &mask(&[0, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(dice(&mask(&[0, 0]), &mask(&[0, 0])).unwrap(), 1.0);
        // |X| = 4, |Y| = 6, |X ∩ Y| = 3
        let x = mask(&[1, 1, 1, 1, 0, 0, 0]);
        let y = mask(&[0, 1, 1, 1, 1, 1, 1]);
        assert_eq!(dice(&x, &y).unwrap(), 0.6);
        assert!(matches!(dice(&x, &mask(&[1])), Err(MetricError::DimsMismatch(..))));
    }

    #[test]
    fn table_layout() {
        let t = MetricsTable {
            rows: vec![
                MetricRow { task: TaskId::DrGrading, dataset: DEFAULT_DATASET.into(), metric: MetricName::Acc, value: 0.97, n: 10 },
                MetricRow { task: TaskId::Ex, dataset: DEFAULT_DATASET.into(), metric: MetricName::Dice, value: 0.854, n: 2 },
            ],
        };
        assert_eq!(
            t.render_text(),
            "Algorithm Type  Algorithm       Acc    Dice\n\
             classification  DR_class_model  0.970  --\n\
             segmentation    EX_seg_model    --     0.854\n"
        );
        assert!(t.render_csv().contains("segmentation,EX_seg_model,ex,default,,0.854,2"));
    }
}
