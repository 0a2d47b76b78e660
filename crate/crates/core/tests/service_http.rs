//! The API served over real HTTP.

mod common;

use std::sync::Arc;

use ophglm::inference::load_oracle;
use ophglm::llm::MockEchoLlm;
use ophglm::service::{Api, ApiError, ApiOptions, HttpServer};
use serde_json::{json, Value};

fn call(agent: &ureq::Agent, method: &str, url: &str, body: Option<Value>) -> (u16, Option<String>, String) {
    let req = agent.request(method, url);
    let res = match body {
        Some(b) => req.send_json(b),
        None => req.call(),
    };
    let resp = match res {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => panic!("{e}"),
    };
    let status = resp.status();
    let cache = resp.header("x-cache").map(str::to_string);
    (status, cache, resp.into_string().unwrap())
}

#[test]
fn upload_diagnose_chat_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let backend = load_oracle(&common::write_oracle_fixture(dir.path())).unwrap();
    let opts = ApiOptions {
        max_upload_bytes: 1024,
        data_dir: Some(dir.path().join("data")),
        ..ApiOptions::default()
    };
    let api = Api::new(Arc::new(backend), Arc::new(MockEchoLlm::default()), opts).unwrap();
    let server = HttpServer::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", server.local_addr().unwrap());
    let stop = server.shutdown_handle();

    struct StopOnDrop<F: Fn()>(F);
    impl<F: Fn()> Drop for StopOnDrop<F> {
        fn drop(&mut self) {
            (self.0)()
        }
    }

    std::thread::scope(|s| {
        s.spawn(|| server.run(&api, 2));
        // stops the workers even when an assertion below panics
        let _guard = StopOnDrop(stop);
        let agent = ureq::AgentBuilder::new().timeout(std::time::Duration::from_secs(20)).build();

        let (st, _, body) = call(&agent, "GET", &format!("{base}/health"), None);
        assert_eq!((st, body.as_str()), (200, r#"{"status":"ok"}"#));

        let (st, _, body) = call(
            &agent,
            "POST",
            &format!("{base}/cases"),
            Some(json!({"image_base64": "AAAA", "width": 1000, "height": 1000, "case_id": "fixture-001"})),
        );
        assert_eq!(st, 201, "{body}");

        let url = format!("{base}/cases/fixture-001/diagnose");
        let (st, cache, first) = call(&agent, "POST", &url, None);
        assert_eq!((st, cache.as_deref()), (200, Some("miss")));
        let v: Value = serde_json::from_str(&first).unwrap();
        assert_eq!(v["report"]["text"].as_str().unwrap(), common::golden_report());
        let (_, cache, second) = call(&agent, "POST", &url, None);
        assert_eq!(cache.as_deref(), Some("hit"));
        assert_eq!(first, second);

        // body far beyond the envelope limit
        let big = "A".repeat(8 * 1024 * 1024);
        let (st, _, body) = call(
            &agent,
            "POST",
            &format!("{base}/cases"),
            Some(json!({"image_base64": big, "width": 1, "height": 1})),
        );
        assert_eq!(st, 413);
        let e: ApiError = serde_json::from_str(&body).unwrap();
        assert_eq!(e.kind, "payload-too-large");

        let (st, _, body) = call(&agent, "POST", &format!("{base}/sessions"), Some(json!({"case_id": "fixture-001"})));
        assert_eq!(st, 201);
        let sid = serde_json::from_str::<Value>(&body).unwrap()["session_id"].as_str().unwrap().to_string();
        let (st, _, body) = call(&agent, "POST", &format!("{base}/sessions/{sid}/chat"), Some(json!({"text": "hello"})));
        assert_eq!(st, 200);
        assert_eq!(serde_json::from_str::<Value>(&body).unwrap(), json!({"assistant_text": "HELLO", "turn_index": 1}));

        let (st, _, body) = call(&agent, "GET", &format!("{base}/nope"), None);
        assert_eq!(st, 404);
        assert!(serde_json::from_str::<ApiError>(&body).unwrap().is_documented());
    });
}

#[test]
fn eval_endpoint_returns_table() {
    let api = Api::new(
        Arc::new(ophglm::OracleBackend::default()),
        Arc::new(MockEchoLlm::default()),
        ApiOptions::default(),
    )
    .unwrap();
    let dir = common::eval_fixture_dir();
    let r = api.handle(&ophglm::service::ApiRequest::json(
        "POST",
        "/eval",
        &json!({"predictions": dir.join("pred.tsv"), "truth": dir.join("truth.tsv")}),
    ));
    assert_eq!(r.status, 200);
    let v = r.body_json().unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 9);
    assert!(v["table"].as_str().unwrap().contains("MA_seg_model          --     0.699"));
}
