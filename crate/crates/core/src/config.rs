//! TOML configuration shared by `ophctl` and the HTTP service.
//!
//! ```toml
//! [inference]
//! backend = "oracle"            # or "remote"
//! manifest = "oracle/manifest.tsv"
//! endpoint = "http://127.0.0.1:8500"
//! timeout_ms = 5000
//!
//! [pipeline]
//! presence_threshold = 0.0001
//!
//! [llm]
//! kind = "mock"                 # or "http"
//!
//! [service]
//! bind = "127.0.0.1:8080"
//! data_dir = "data"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dialogue::PromptTemplate;
use crate::forge::batch::BatchConfig;
use crate::forge::clean::CleaningConfig;
use crate::forge::dedup::DEFAULT_DEDUP_THRESHOLD;
use crate::forge::gate::DEFAULT_GATE_THRESHOLD;
use crate::forge::generate::GenerationParams;
use crate::forge::prompts::GenTemplate;
use crate::forge::records::DEFAULT_OPHTHALMIC_KEYWORDS;
use crate::inference::{load_oracle, Backend, InferenceError, RemoteBackend, RemoteConfig};
use crate::llm::{HttpLlmClient, HttpLlmConfig, LlmClient, MockEchoLlm, MockGenLlm};
use crate::pipeline::PipelineConfig;
use crate::report::{load_template, ReportTemplate};
use crate::retry::RetryPolicy;

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },
    #[error("config {}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Oracle,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceSection {
    pub backend: BackendKind,
    pub manifest: Option<PathBuf>,
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
}

impl Default for InferenceSection {
    fn default() -> Self {
        let remote = RemoteConfig::default();
        Self {
            backend: BackendKind::Oracle,
            manifest: None,
            endpoint: remote.endpoint,
            timeout_ms: remote.timeout_ms,
            retry: remote.retry,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LlmKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSection {
    pub kind: LlmKind,
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
}

impl Default for LlmSection {
    fn default() -> Self {
        let http = HttpLlmConfig::default();
        Self {
            kind: LlmKind::Mock,
            endpoint: http.endpoint,
            timeout_ms: http.timeout_ms,
            retry: http.retry,
        }
    }
}

/// Template overrides; unset entries use the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplatesSection {
    pub report: Option<PathBuf>,
    pub prompt: Option<PathBuf>,
    pub generation: Option<PathBuf>,
    pub cleaning: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSection {
    pub bind: String,
    /// In-memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub max_upload_bytes: usize,
    pub workers: usize,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            data_dir: None,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForgeSection {
    pub dedup_threshold: f64,
    pub gate_threshold: f64,
    pub max_tokens: u32,
    pub temperature: f64,
    pub keywords: Vec<String>,
}

impl Default for ForgeSection {
    fn default() -> Self {
        let params = GenerationParams::default();
        Self {
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            gate_threshold: DEFAULT_GATE_THRESHOLD,
            max_tokens: params.max_tokens,
            temperature: params.temperature,
            keywords: DEFAULT_OPHTHALMIC_KEYWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub inference: InferenceSection,
    pub pipeline: PipelineConfig,
    pub llm: LlmSection,
    pub templates: TemplatesSection,
    pub service: ServiceSection,
    pub forge: ForgeSection,
}

fn unit_interval(name: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be in [0, 1], got {v}")))
    }
}

impl Config {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(src).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut c = Self::parse(&src).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            msg: match e {
                ConfigError::Invalid(m) => m,
                other => other.to_string(),
            },
        })?;
        c.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        unit_interval("pipeline.presence_threshold", self.pipeline.presence_threshold)?;
        unit_interval("forge.dedup_threshold", self.forge.dedup_threshold)?;
        unit_interval("forge.gate_threshold", self.forge.gate_threshold)?;
        if self.service.max_upload_bytes == 0 {
            return Err(ConfigError::Invalid("service.max_upload_bytes must be positive".into()));
        }
        if self.inference.timeout_ms == 0 {
            return Err(ConfigError::Invalid("inference.timeout_ms must be positive".into()));
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.inference.manifest);
        fix(&mut self.templates.report);
        fix(&mut self.templates.prompt);
        fix(&mut self.templates.generation);
        fix(&mut self.templates.cleaning);
        fix(&mut self.service.data_dir);
    }

    pub fn build_backend(&self) -> Result<Arc<dyn Backend>, InferenceError> {
        match self.inference.backend {
            BackendKind::Oracle => {
                let manifest = self
                    .inference
                    .manifest
                    .clone()
                    .ok_or_else(|| InferenceError::ManifestNotFound(PathBuf::from("<inference.manifest unset>")))?;
                Ok(Arc::new(load_oracle(&manifest)?))
            }
            BackendKind::Remote => Ok(Arc::new(RemoteBackend::new(RemoteConfig {
                endpoint: self.inference.endpoint.clone(),
                timeout_ms: self.inference.timeout_ms,
                retry: self.inference.retry,
            }))),
        }
    }

    pub fn build_llm(&self) -> Arc<dyn LlmClient> {
        match self.llm.kind {
            LlmKind::Mock => Arc::new(MockEchoLlm::default()),
            LlmKind::Http => Arc::new(HttpLlmClient::new(HttpLlmConfig {
                endpoint: self.llm.endpoint.clone(),
                timeout_ms: self.llm.timeout_ms,
                retry: self.llm.retry,
            })),
        }
    }

    /// Generator client for the forge. The mock kind answers in `Q:`/`A:` form.
    pub fn build_forge_llm(&self) -> Arc<dyn LlmClient> {
        match self.llm.kind {
            LlmKind::Mock => Arc::new(MockGenLlm),
            LlmKind::Http => self.build_llm(),
        }
    }

    pub fn report_template(&self) -> Result<ReportTemplate, ConfigError> {
        match &self.templates.report {
            Some(p) => load_template(p).map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(ReportTemplate::default_template()),
        }
    }

    pub fn prompt_template(&self) -> Result<PromptTemplate, ConfigError> {
        match &self.templates.prompt {
            Some(p) => PromptTemplate::load(p).map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(PromptTemplate::default()),
        }
    }

    pub fn batch_config(&self) -> Result<BatchConfig, ConfigError> {
        let template = match &self.templates.generation {
            Some(p) => GenTemplate::load(p).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => GenTemplate::default(),
        };
        let cleaning = match &self.templates.cleaning {
            Some(p) => CleaningConfig::load(p).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => CleaningConfig::default(),
        };
        Ok(BatchConfig {
            template,
            cleaning,
            params: GenerationParams {
                max_tokens: self.forge.max_tokens,
                temperature: self.forge.temperature,
            },
            dedup_threshold: self.forge.dedup_threshold,
            gate_threshold: self.forge.gate_threshold,
        })
    }
}
