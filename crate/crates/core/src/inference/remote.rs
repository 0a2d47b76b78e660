//! HTTP client for an external inference service.
//!
//! `POST {endpoint}/infer` with `{"case_id", "task"}`; the service answers
//! `{"probs": [...]}` for classifiers or
//! `{"raster": {"width", "height", "data": [...]}}` for segmenters.
//! A 404 maps to `case-unknown`; transport errors and 5xx responses are
//! retried with exponential backoff.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, InferenceError, ProbRaster};
use crate::retry::{Attempt, RetryPolicy};
use crate::task::TaskId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8500".into(),
            timeout_ms: 5000,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Serialize)]
struct InferRequest<'a> {
    case_id: &'a str,
    task: TaskId,
}

#[derive(Deserialize)]
struct InferResponse {
    probs: Option<Vec<f64>>,
    raster: Option<ProbRaster>,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

enum Failure {
    CaseUnknown,
    Other(String),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Self { config, agent }
    }

    fn query(&self, case_id: &str, task: TaskId) -> Result<InferResponse, InferenceError> {
        let url = format!("{}/infer", self.config.endpoint.trim_end_matches('/'));
        let body = InferRequest { case_id, task };
        let result = self.config.retry.run(|_| match self.agent.post(&url).send_json(&body) {
            Ok(resp) => resp
                .into_json::<InferResponse>()
                .map_err(|e| Attempt::Fatal(Failure::Other(format!("malformed response: {e}")))),
            Err(ureq::Error::Status(404, _)) => Err(Attempt::Fatal(Failure::CaseUnknown)),
            Err(ureq::Error::Status(code, _)) if code >= 500 => {
                Err(Attempt::Transient(Failure::Other(format!("status {code}"))))
            }
            Err(ureq::Error::Status(code, _)) => Err(Attempt::Fatal(Failure::Other(format!("status {code}")))),
            Err(ureq::Error::Transport(t)) => Err(Attempt::Transient(Failure::Other(t.to_string()))),
        });
        result.map_err(|ex| match ex.last {
            Failure::CaseUnknown => InferenceError::CaseUnknown(case_id.to_string()),
            Failure::Other(detail) => InferenceError::BackendUnavailable {
                retries: ex.retries,
                detail,
            },
        })
    }
}

impl Backend for RemoteBackend {
    fn class_probs(&self, case_id: &str, task: TaskId) -> Result<Vec<f64>, InferenceError> {
        self.query(case_id, task)?
            .probs
            .ok_or_else(|| InferenceError::BackendUnavailable {
                retries: 0,
                detail: "response lacks probs".into(),
            })
    }

    fn seg_raster(&self, case_id: &str, lesion: TaskId) -> Result<ProbRaster, InferenceError> {
        let raster = self
            .query(case_id, lesion)?
            .raster
            .ok_or_else(|| InferenceError::BackendUnavailable {
                retries: 0,
                detail: "response lacks raster".into(),
            })?;
        ProbRaster::new(raster.width, raster.height, raster.data).map_err(|e| {
            InferenceError::BackendUnavailable {
                retries: 0,
                detail: e.to_string(),
            }
        })
    }
}
