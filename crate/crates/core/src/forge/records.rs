//! Input records for instance generation and their JSONL ingestion.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ForgeError;

/// The five knowledge scenarios an instruction can be generated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ImagingDescription,
    CausesSymptoms,
    DiagnosisExamination,
    TreatmentPrevention,
    PrognosisLifestyle,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::ImagingDescription,
        Scenario::CausesSymptoms,
        Scenario::DiagnosisExamination,
        Scenario::TreatmentPrevention,
        Scenario::PrognosisLifestyle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::ImagingDescription => "imaging_description",
            Scenario::CausesSymptoms => "causes_symptoms",
            Scenario::DiagnosisExamination => "diagnosis_examination",
            Scenario::TreatmentPrevention => "treatment_prevention",
            Scenario::PrognosisLifestyle => "prognosis_lifestyle",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| ForgeError::Invalid(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "KnowledgeRecordRaw")]
pub struct KnowledgeRecord {
    pub disease: String,
    pub scenario: Scenario,
    pub facts: Vec<String>,
}

#[derive(Deserialize)]
struct KnowledgeRecordRaw {
    disease: String,
    scenario: Scenario,
    facts: Vec<String>,
}

impl TryFrom<KnowledgeRecordRaw> for KnowledgeRecord {
    type Error = ForgeError;

    fn try_from(r: KnowledgeRecordRaw) -> Result<Self, Self::Error> {
        KnowledgeRecord::new(r.disease, r.scenario, r.facts)
    }
}

impl KnowledgeRecord {
    pub fn new(disease: impl Into<String>, scenario: Scenario, facts: Vec<String>) -> Result<Self, ForgeError> {
        let disease = disease.into();
        if disease.trim().is_empty() {
            return Err(ForgeError::Invalid("knowledge record has empty disease".into()));
        }
        if facts.is_empty() {
            return Err(ForgeError::Invalid(format!("knowledge record for {disease} has no facts")));
        }
        if facts.iter().any(|f| f.trim().is_empty()) {
            return Err(ForgeError::Invalid(format!("knowledge record for {disease} has an empty fact")));
        }
        Ok(Self {
            disease,
            scenario,
            facts,
        })
    }

    /// Content-derived identifier, stable across runs.
    pub fn source_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.disease.as_bytes());
        h.update([0]);
        h.update(self.scenario.as_str().as_bytes());
        for f in &self.facts {
            h.update([0]);
            h.update(f.as_bytes());
        }
        format!("kg-{}", &hex::encode(h.finalize())[..12])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Patient,
    Doctor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDialogueRaw")]
pub struct RawDialogue {
    pub source_id: String,
    pub turns: Vec<Utterance>,
    /// Disease keyword that matched during ingestion filtering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disease: Option<String>,
}

#[derive(Deserialize)]
struct RawDialogueRaw {
    source_id: String,
    turns: Vec<Utterance>,
    #[serde(default)]
    disease: Option<String>,
}

impl TryFrom<RawDialogueRaw> for RawDialogue {
    type Error = ForgeError;

    fn try_from(r: RawDialogueRaw) -> Result<Self, Self::Error> {
        let mut d = RawDialogue::new(r.source_id, r.turns)?;
        d.disease = r.disease;
        Ok(d)
    }
}

impl RawDialogue {
    pub fn new(source_id: impl Into<String>, turns: Vec<Utterance>) -> Result<Self, ForgeError> {
        let source_id = source_id.into();
        if source_id.trim().is_empty() {
            return Err(ForgeError::Invalid("dialogue has empty source_id".into()));
        }
        if !turns.iter().any(|t| t.speaker == Speaker::Patient) || !turns.iter().any(|t| t.speaker == Speaker::Doctor) {
            return Err(ForgeError::Invalid(format!(
                "dialogue {source_id} needs at least one patient and one doctor turn"
            )));
        }
        if let Some(i) = turns.iter().position(|t| t.text.trim().is_empty()) {
            return Err(ForgeError::Invalid(format!("dialogue {source_id} turn {i} is empty")));
        }
        Ok(Self {
            source_id,
            turns,
            disease: None,
        })
    }
}

/// Default keyword list for selecting ophthalmology dialogues.
pub const DEFAULT_OPHTHALMIC_KEYWORDS: &[&str] = &[
    "diabetic retinopathy",
    "macular degeneration",
    "glaucoma",
    "myopia",
    "cataract",
    "retina",
    "retinal",
    "fundus",
    "macula",
    "intraocular",
    "eye",
];

/// Keeps dialogues mentioning any keyword (case-insensitive) and tags each
/// with the first keyword, in list order, that it mentions.
pub fn filter_ophthalmic(dialogues: Vec<RawDialogue>, keywords: &[String]) -> Vec<RawDialogue> {
    let lowered: Vec<String> = keywords.iter().map(|k| k.to_lowercase()).collect();
    dialogues
        .into_iter()
        .filter_map(|mut d| {
            let body = d
                .turns
                .iter()
                .map(|t| t.text.to_lowercase())
                .collect::<Vec<_>>()
                .join("\n");
            let hit = lowered.iter().position(|k| !k.is_empty() && body.contains(k.as_str()))?;
            if d.disease.is_none() {
                d.disease = Some(keywords[hit].clone());
            }
            Some(d)
        })
        .collect()
}

/// Reads a JSONL file of `T`, reporting the failing line number.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, ForgeError> {
    let text = std::fs::read_to_string(path).map_err(|e| ForgeError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| ForgeError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
