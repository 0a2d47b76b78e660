//! Generation prompts built from knowledge records and real dialogues.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::records::{KnowledgeRecord, RawDialogue, Scenario, Speaker};
use super::{ForgeError, InstanceKind, Provenance};

pub const DEFAULT_GEN_TEMPLATE: &str = include_str!("../../templates/generation.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenTemplate {
    pub template_id: String,
    pub knowledge: String,
    pub role_directive: String,
    pub dialogue: String,
    /// Task text per scenario. A template may omit scenarios it does not serve.
    #[serde(default)]
    pub directives: BTreeMap<Scenario, String>,
}

impl Default for GenTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_GEN_TEMPLATE).expect("shipped generation template is valid")
    }
}

const KNOWLEDGE_SLOTS: &[&str] = &["disease", "directive", "facts"];
const DIALOGUE_SLOTS: &[&str] = &["role_directive", "disease", "turns"];

impl GenTemplate {
    pub fn parse(src: &str) -> Result<Self, ForgeError> {
        let t: Self = toml::from_str(src).map_err(|e| ForgeError::Template(e.to_string()))?;
        check_slots(&t.knowledge, KNOWLEDGE_SLOTS, "knowledge")?;
        check_slots(&t.dialogue, DIALOGUE_SLOTS, "dialogue")?;
        let mut seen = std::collections::HashSet::new();
        for (s, d) in &t.directives {
            if d.trim().is_empty() {
                return Err(ForgeError::Template(format!("directive for {s} is empty")));
            }
            if !seen.insert(d.trim()) {
                return Err(ForgeError::Template(format!("directive for {s} duplicates another scenario")));
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, ForgeError> {
        let src = std::fs::read_to_string(path).map_err(|e| ForgeError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&src)
    }
}

fn slots(pattern: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                out.push(&after[..end]);
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

fn check_slots(pattern: &str, allowed: &[&str], which: &str) -> Result<(), ForgeError> {
    for s in slots(pattern) {
        if !allowed.contains(&s) {
            return Err(ForgeError::Template(format!("unknown placeholder {{{s}}} in {which} prompt")));
        }
    }
    for a in allowed {
        if !slots(pattern).contains(a) {
            return Err(ForgeError::Template(format!("{which} prompt lacks {{{a}}}")));
        }
    }
    Ok(())
}

/// Single-pass substitution; values are inserted verbatim and never rescanned.
fn fill(pattern: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(pattern.len() * 2);
    let mut rest = pattern;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('}').and_then(|end| {
            values
                .iter()
                .find(|(k, _)| *k == &after[..end])
                .map(|(_, v)| (end, *v))
        }) {
            Some((end, v)) => {
                out.push_str(v);
                rest = &after[end + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPrompt {
    pub prompt_id: String,
    pub kind: InstanceKind,
    pub provenance: Provenance,
    pub source_id: String,
    pub template_id: String,
    pub disease: String,
    pub scenario: Option<Scenario>,
    pub text: String,
}

pub fn make_knowledge_prompt(record: &KnowledgeRecord, template: &GenTemplate) -> Result<GenerationPrompt, ForgeError> {
    let directive = template
        .directives
        .get(&record.scenario)
        .ok_or_else(|| ForgeError::Template(format!(
            "template {} has no directive for scenario {}",
            template.template_id, record.scenario
        )))?;
    let facts = record
        .facts
        .iter()
        .map(|f| format!("- {f}"))
        .collect::<Vec<_>>()
        .join("\n");
    let text = fill(
        &template.knowledge,
        &[("disease", &record.disease), ("directive", directive), ("facts", &facts)],
    );
    let source_id = record.source_id();
    Ok(GenerationPrompt {
        prompt_id: format!("{source_id}:{}", template.template_id),
        kind: InstanceKind::Instruction,
        provenance: Provenance::Knowledge,
        source_id,
        template_id: template.template_id.clone(),
        disease: record.disease.clone(),
        scenario: Some(record.scenario),
        text,
    })
}

pub fn speaker_tag(s: Speaker) -> &'static str {
    match s {
        Speaker::Patient => "PATIENT:",
        Speaker::Doctor => "DOCTOR:",
    }
}

pub fn make_dialogue_prompt(dialogue: &RawDialogue, template: &GenTemplate) -> GenerationPrompt {
    let turns = dialogue
        .turns
        .iter()
        .map(|u| format!("{} {}", speaker_tag(u.speaker), u.text.trim()))
        .collect::<Vec<_>>()
        .join("\n");
    let disease = dialogue.disease.clone().unwrap_or_else(|| "ophthalmology".into());
    let text = fill(
        &template.dialogue,
        &[
            ("role_directive", template.role_directive.trim_end()),
            ("disease", &disease),
            ("turns", &turns),
        ],
    );
    GenerationPrompt {
        prompt_id: format!("{}:{}", dialogue.source_id, template.template_id),
        kind: InstanceKind::Conversation,
        provenance: Provenance::Dialogue,
        source_id: dialogue.source_id.clone(),
        template_id: template.template_id.clone(),
        disease,
        scenario: None,
        text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::records::Utterance;

    #[test]
    fn knowledge_prompt_contents() {
        let t = GenTemplate::default();
        let r = KnowledgeRecord::new("AMD", Scenario::TreatmentPrevention, vec!["laser therapy is common".into()]).unwrap();
        let p = make_knowledge_prompt(&r, &t).unwrap();
        assert!(p.text.contains("AMD"));
        assert!(p.text.contains(&t.directives[&Scenario::TreatmentPrevention]));
        assert!(p.text.contains("laser therapy is common"));
        assert_eq!(p.scenario, Some(Scenario::TreatmentPrevention));
    }

    #[test]
    fn five_distinct_directives() {
        let t = GenTemplate::default();
        let texts: std::collections::HashSet<String> = Scenario::ALL
            .iter()
            .map(|&s| {
                let r = KnowledgeRecord::new("glaucoma", s, vec!["f".into()]).unwrap();
                make_knowledge_prompt(&r, &t).unwrap().text
            })
            .collect();
        assert_eq!(texts.len(), 5);
    }

    #[test]
    fn missing_directive_is_named_error() {
        let mut t = GenTemplate::default();
        t.directives.remove(&Scenario::CausesSymptoms);
        let r = KnowledgeRecord::new("AMD", Scenario::CausesSymptoms, vec!["x".into()]).unwrap();
        let e = make_knowledge_prompt(&r, &t).unwrap_err();
        assert!(e.to_string().contains("causes_symptoms"), "{e}");
    }

    #[test]
    fn facts_are_not_rescanned() {
        let t = GenTemplate::default();
        let r = KnowledgeRecord::new("AMD", Scenario::CausesSymptoms, vec!["literal {disease} braces".into()]).unwrap();
        assert!(make_knowledge_prompt(&r, &t).unwrap().text.contains("literal {disease} braces"));
    }

    #[test]
    fn dialogue_prompt_tags_turns_in_order() {
        let t = GenTemplate::default();
        let d = RawDialogue::new(
            "md-1",
            vec![
                Utterance { speaker: Speaker::Patient, text: "My eye hurts".into() },
                Utterance { speaker: Speaker::Doctor, text: "Since when?".into() },
            ],
        )
        .unwrap();
        let p = make_dialogue_prompt(&d, &t);
        assert!(p.text.contains("PATIENT: My eye hurts\nDOCTOR: Since when?"));
        assert!(p.text.contains("Play the role of an experienced ophthalmologist"));
    }

    #[test]
    fn template_rejects_unknown_slot() {
        let bad = DEFAULT_GEN_TEMPLATE.replace("Disease: {disease}", "Disease: {icd_code}");
        assert!(GenTemplate::parse(&bad).is_err());
    }
}
