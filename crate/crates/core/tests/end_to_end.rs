//! Oracle backend through pipeline, report and API, against the golden report.

mod common;

use std::sync::Arc;

use ophglm::inference::load_oracle;
use ophglm::llm::MockEchoLlm;
use ophglm::pipeline::{read_case_list, run_diagnosis, PipelineConfig};
use ophglm::report::render_report;
use ophglm::service::{Api, ApiOptions, ApiRequest};
use ophglm::{FundusCase, ReportTemplate, TaskId};
use serde_json::json;

#[test]
fn case_list_to_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let backend = load_oracle(&common::write_oracle_fixture(dir.path())).unwrap();
    let cases = read_case_list(&common::write_case_list(dir.path())).unwrap();
    assert_eq!(cases.len(), 1);
    let findings = run_diagnosis(&cases[0], &backend, &PipelineConfig::default()).unwrap();
    let dr = findings.classification(TaskId::DrGrading).unwrap();
    assert_eq!(dr.label_name, "PDR");
    let ex = findings.lesion(TaskId::Ex).unwrap();
    assert_eq!(ex.pixel_count, 200);
    assert!(ex.present);
    assert!((ex.area_fraction - 2.0e-4).abs() < 1e-15);
    let report = render_report(&findings, &cases[0], &ReportTemplate::default_template()).unwrap();
    assert_eq!(report.text, common::golden_report());
}

#[test]
fn disabled_task_blocks_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let backend = load_oracle(&common::write_oracle_fixture(dir.path())).unwrap();
    let case = FundusCase::new(common::FIXTURE_CASE, "x.png", 1000, 1000).unwrap();
    let mut config = PipelineConfig::default();
    config.enabled.insert(TaskId::Glaucoma, false);
    let findings = run_diagnosis(&case, &backend, &config).unwrap();
    assert!(!findings.is_complete());
    let err = render_report(&findings, &case, &ReportTemplate::default_template()).unwrap_err();
    assert!(err.to_string().contains("glaucoma"), "{err}");
}

#[test]
fn api_diagnose_embeds_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let backend = load_oracle(&common::write_oracle_fixture(dir.path())).unwrap();
    let api = Api::new(Arc::new(backend), Arc::new(MockEchoLlm::default()), ApiOptions::default()).unwrap();
    let up = api.handle(&ApiRequest::json(
        "POST",
        "/cases",
        &json!({"image_base64": "iVBORw0KGgo=", "width": 1000, "height": 1000, "case_id": common::FIXTURE_CASE}),
    ));
    assert_eq!(up.status, 201);
    let r = api.handle(&ApiRequest::new("POST", "/cases/fixture-001/diagnose", ""));
    assert_eq!(r.status, 200);
    let body = r.body_json().unwrap();
    assert_eq!(body["report"]["text"].as_str().unwrap(), common::golden_report());
    let dr = body["findings"]["classifications"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["task"] == "dr_grading")
        .unwrap();
    assert_eq!(dr["label_name"], "PDR");

    // a session grounded on the case sends the report block to the LLM
    let s = api.handle(&ApiRequest::json("POST", "/sessions", &json!({"case_id": "fixture-001"})));
    let sid = s.body_json().unwrap()["session_id"].as_str().unwrap().to_string();
    let c = api.handle(&ApiRequest::json("POST", &format!("/sessions/{sid}/chat"), &json!({"text": "hello"})));
    assert_eq!(c.body_json().unwrap(), json!({"assistant_text": "HELLO", "turn_index": 1}));
    let view = api.handle(&ApiRequest::new("GET", &format!("/sessions/{sid}"), "")).body_json().unwrap();
    assert_eq!(view["report"]["text"].as_str().unwrap(), common::golden_report());
}
