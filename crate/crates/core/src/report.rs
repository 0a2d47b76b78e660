//! Structured-text diagnostic reports rendered from [`DiagnosisFindings`].
//!
//! Template files are UTF-8 text with `[section:<name>]` markers and
//! `key = pattern` lines. Patterns substitute `{placeholder}` names; `{{` and
//! `}}` produce literal braces. Every section accepts repeated `text` keys
//! (one output line each). Item keys:
//!
//! - `disease_findings`: `positive` (once per positive disease), `none`
//! - `lesion_findings`: `present` (once per present lesion), `absent`
//!   (single clause listing absent lesions), `none`

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::pipeline::{DiagnosisFindings, FundusCase, LesionSummary};
use crate::task::TaskId;

/// The shipped default template.
pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/default_report.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Section {
    Header,
    DrGrade,
    DiseaseFindings,
    LesionFindings,
    Disclaimer,
}

impl Section {
    pub const ORDER: [Section; 5] = [
        Section::Header,
        Section::DrGrade,
        Section::DiseaseFindings,
        Section::LesionFindings,
        Section::Disclaimer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Section::Header => "header",
            Section::DrGrade => "dr_grade",
            Section::DiseaseFindings => "disease_findings",
            Section::LesionFindings => "lesion_findings",
            Section::Disclaimer => "disclaimer",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ORDER.into_iter().find(|x| x.name() == s)
    }

    /// Item keys allowed besides `text`, and whether each is required.
    fn item_keys(self) -> &'static [&'static str] {
        match self {
            Section::DiseaseFindings => &["positive", "none"],
            Section::LesionFindings => &["present", "absent", "none"],
            _ => &[],
        }
    }
}

const CASE_PLACEHOLDERS: &[&str] = &["case_id", "image_ref", "width", "height", "dr_grade", "dr_confidence"];

fn item_placeholders(key: &str) -> &'static [&'static str] {
    match key {
        "positive" => &["disease_name", "label_name", "confidence"],
        "present" => &["lesion_name", "lesion_code", "pixel_count", "area_percent", "area_fraction"],
        "absent" => &["lesion_list"],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pattern(Vec<Piece>);

impl Pattern {
    fn parse(src: &str) -> Result<Self, String> {
        let mut pieces = Vec::new();
        let mut lit = String::new();
        let mut chars = src.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    lit.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    lit.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some(ch) => name.push(ch),
                            None => return Err(format!("unterminated placeholder {{{name}")),
                        }
                    }
                    if !lit.is_empty() {
                        pieces.push(Piece::Literal(std::mem::take(&mut lit)));
                    }
                    pieces.push(Piece::Slot(name));
                }
                '}' => return Err("unmatched '}'".into()),
                _ => lit.push(c),
            }
        }
        if !lit.is_empty() {
            pieces.push(Piece::Literal(lit));
        }
        Ok(Self(pieces))
    }

    fn slots(&self) -> impl Iterator<Item = &str> {
        self.0.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(s.as_str()),
            Piece::Literal(_) => None,
        })
    }

    fn render(&self, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, ReportError> {
        let mut out = String::new();
        for p in &self.0 {
            match p {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(name) => {
                    out.push_str(&lookup(name).ok_or_else(|| ReportError::Unresolved(name.clone()))?)
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct SectionTemplate {
    text: Vec<Pattern>,
    items: Vec<(String, Pattern)>,
}

impl SectionTemplate {
    fn item(&self, key: &str) -> &Pattern {
        &self
            .items
            .iter()
            .find(|(k, _)| k == key)
            .expect("validated at load")
            .1
    }
}

/// Validated report template. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportTemplate {
    pub template_id: String,
    sections: Vec<SectionTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown placeholder {0}")]
    UnknownPlaceholder(String),
    #[error("missing section {0}")]
    MissingSection(&'static str),
    #[error("unknown section {0}")]
    UnknownSection(String),
    #[error("duplicate section {0}")]
    DuplicateSection(&'static str),
    #[error("missing key {key} in section {section}")]
    MissingKey { section: &'static str, key: &'static str },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("cannot read template {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("incomplete-findings: {}", .0.join(", "))]
    IncompleteFindings(Vec<String>),
    #[error("findings are for case {findings}, case record is {case}")]
    CaseMismatch { findings: String, case: String },
    #[error("template error: unresolved placeholder {0}")]
    Unresolved(String),
}

impl ReportTemplate {
    pub fn default_template() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("shipped template is valid")
    }

    pub fn parse(src: &str) -> Result<Self, TemplateError> {
        let mut template_id = None;
        let mut sections: Vec<Option<SectionTemplate>> = vec![None; Section::ORDER.len()];
        let mut current: Option<Section> = None;

        for (idx, raw) in src.lines().enumerate() {
            let line_no = idx + 1;
            let syntax = |msg: String| TemplateError::Syntax { line: line_no, msg };
            let line = raw.trim_end_matches('\r');
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(inner) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = inner
                    .strip_prefix("section:")
                    .ok_or_else(|| syntax(format!("expected [section:<name>], found [{inner}]")))?;
                let sec = Section::from_name(name.trim())
                    .ok_or_else(|| TemplateError::UnknownSection(name.trim().to_string()))?;
                let slot = &mut sections[sec as usize];
                if slot.is_some() {
                    return Err(TemplateError::DuplicateSection(sec.name()));
                }
                *slot = Some(SectionTemplate::default());
                current = Some(sec);
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key = value, found '{trimmed}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let Some(sec) = current else {
                if key == "template_id" && !value.is_empty() {
                    template_id = Some(value.to_string());
                    continue;
                }
                return Err(syntax(format!("key '{key}' outside any section")));
            };
            let pattern = Pattern::parse(value).map_err(syntax)?;
            let allowed_extra: &[&str] = if key == "text" {
                &[]
            } else if sec.item_keys().contains(&key) {
                item_placeholders(key)
            } else {
                return Err(syntax(format!("unknown key '{key}' in section {}", sec.name())));
            };
            if let Some(bad) = pattern
                .slots()
                .find(|s| !CASE_PLACEHOLDERS.contains(s) && !allowed_extra.contains(s))
            {
                return Err(TemplateError::UnknownPlaceholder(bad.to_string()));
            }
            let st = sections[sec as usize].as_mut().expect("section opened");
            if key == "text" {
                st.text.push(pattern);
            } else if st.items.iter().any(|(k, _)| k == key) {
                return Err(syntax(format!("duplicate key '{key}' in section {}", sec.name())));
            } else {
                st.items.push((key.to_string(), pattern));
            }
        }

        let mut out = Vec::with_capacity(Section::ORDER.len());
        for (sec, st) in Section::ORDER.into_iter().zip(sections) {
            let st = st.ok_or(TemplateError::MissingSection(sec.name()))?;
            for &key in sec.item_keys() {
                if !st.items.iter().any(|(k, _)| k == key) {
                    return Err(TemplateError::MissingKey { section: sec.name(), key });
                }
            }
            out.push(st);
        }
        if !out[Section::Header as usize]
            .text
            .iter()
            .any(|p| p.slots().any(|s| s == "case_id"))
        {
            return Err(TemplateError::MissingKey {
                section: "header",
                key: "{case_id}",
            });
        }
        Ok(Self {
            template_id: template_id.unwrap_or_else(|| "unnamed".into()),
            sections: out,
        })
    }

    fn section(&self, s: Section) -> &SectionTemplate {
        &self.sections[s as usize]
    }
}

pub fn load_template(path: &Path) -> Result<ReportTemplate, TemplateError> {
    let src = std::fs::read_to_string(path).map_err(|e| TemplateError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    ReportTemplate::parse(&src)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub case_id: String,
    pub text: String,
    pub findings_digest: String,
}

impl fmt::Display for DiagnosticReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn fmt_prob(p: f64) -> String {
    format!("{p:.3}")
}

fn lesion_label(l: TaskId) -> String {
    format!("{} ({})", l.display_name(), l.lesion_code())
}

/// Renders the report. Output uses `\n` line endings, one blank line between
/// sections, and a trailing newline.
pub fn render_report(
    findings: &DiagnosisFindings,
    case: &FundusCase,
    template: &ReportTemplate,
) -> Result<DiagnosticReport, ReportError> {
    let problems = findings.completeness_problems();
    if !problems.is_empty() {
        return Err(ReportError::IncompleteFindings(problems));
    }
    if findings.case_id != case.case_id {
        return Err(ReportError::CaseMismatch {
            findings: findings.case_id.clone(),
            case: case.case_id.clone(),
        });
    }
    let dr = findings.classification(TaskId::DrGrading).expect("complete");
    let case_lookup = |name: &str| -> Option<String> {
        Some(match name {
            "case_id" => case.case_id.clone(),
            "image_ref" => case.image_ref.clone(),
            "width" => case.width.to_string(),
            "height" => case.height.to_string(),
            "dr_grade" => dr.label_name.clone(),
            "dr_confidence" => fmt_prob(dr.confidence()),
            _ => return None,
        })
    };

    let mut blocks = Vec::with_capacity(Section::ORDER.len());
    for sec in Section::ORDER {
        let st = template.section(sec);
        let mut lines = Vec::new();
        for p in &st.text {
            lines.push(p.render(&case_lookup)?);
        }
        match sec {
            Section::DiseaseFindings => {
                let positives: Vec<_> = TaskId::CLASSIFICATION[1..]
                    .iter()
                    .filter_map(|&t| findings.classification(t))
                    .filter(|c| c.is_positive())
                    .collect();
                if positives.is_empty() {
                    lines.push(st.item("none").render(&case_lookup)?);
                }
                for c in positives {
                    let lookup = |name: &str| match name {
                        "disease_name" => Some(c.task.display_name().to_string()),
                        "label_name" => Some(c.label_name.clone()),
                        "confidence" => Some(fmt_prob(c.confidence())),
                        other => case_lookup(other),
                    };
                    lines.push(st.item("positive").render(&lookup)?);
                }
            }
            Section::LesionFindings => {
                let (present, absent): (Vec<&LesionSummary>, Vec<&LesionSummary>) = TaskId::SEGMENTATION
                    .iter()
                    .filter_map(|&t| findings.lesion(t))
                    .partition(|l| l.present);
                if present.is_empty() {
                    lines.push(st.item("none").render(&case_lookup)?);
                } else {
                    for l in &present {
                        let lookup = |name: &str| match name {
                            "lesion_name" => Some(l.lesion.display_name().to_string()),
                            "lesion_code" => Some(l.lesion.lesion_code().to_string()),
                            "pixel_count" => Some(l.pixel_count.to_string()),
                            "area_percent" => Some(format!("{:.2}", l.area_fraction * 100.0)),
                            "area_fraction" => Some(format!("{:.6}", l.area_fraction)),
                            other => case_lookup(other),
                        };
                        lines.push(st.item("present").render(&lookup)?);
                    }
                    if !absent.is_empty() {
                        let list = absent.iter().map(|l| lesion_label(l.lesion)).collect::<Vec<_>>().join(", ");
                        let lookup = |name: &str| match name {
                            "lesion_list" => Some(list.clone()),
                            other => case_lookup(other),
                        };
                        lines.push(st.item("absent").render(&lookup)?);
                    }
                }
            }
            _ => {}
        }
        blocks.push(lines.join("\n"));
    }
    let mut text = blocks.join("\n\n");
    text.push('\n');
    Ok(DiagnosticReport {
        case_id: case.case_id.clone(),
        text,
        findings_digest: findings.digest(),
    })
}
