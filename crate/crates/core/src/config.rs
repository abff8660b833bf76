//! Single-document JSON configuration.

use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::GenerationConfig;
use crate::error::{Error, Result};
use crate::model_client::{
    Backend, BatchOptions, Decoding, MockBackend, OpenAiCompatBackend, OpenAiOptions, RetryPolicy,
};

pub const DEFAULT_SEED: u64 = 20240917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    OpenaiCompatible,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub kind: EndpointKind,
    #[serde(default)]
    pub base_url: Option<String>,
    pub model_id: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_token_env_var_name: Option<String>,
    #[serde(default = "default_parallel")]
    pub max_parallel_requests: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Text placed before every prompt, e.g. a BOS string. Raw prompt when absent.
    #[serde(default)]
    pub prompt_prefix: Option<String>,
    #[serde(default = "default_echo_tokens")]
    pub echo_max_tokens: usize,
    /// Fixed continuation for the mock backend.
    #[serde(default)]
    pub completion_text: Option<String>,
    /// Free text, e.g. quantization details.
    #[serde(default)]
    pub metadata: Option<String>,
}

fn default_parallel() -> usize {
    4
}

fn default_timeout() -> u64 {
    60
}

fn default_echo_tokens() -> usize {
    1
}

impl EndpointConfig {
    pub fn mock() -> Self {
        Self {
            kind: EndpointKind::Mock,
            base_url: None,
            model_id: "mock".into(),
            auth_token_env_var_name: None,
            max_parallel_requests: default_parallel(),
            retry: RetryPolicy::default(),
            timeout_secs: default_timeout(),
            prompt_prefix: None,
            echo_max_tokens: default_echo_tokens(),
            completion_text: None,
            metadata: None,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.max_parallel_requests == 0 {
            return Err(Error::Config(format!("endpoint {name}: max_parallel_requests must be >= 1")));
        }
        if self.kind == EndpointKind::OpenaiCompatible && self.base_url.as_deref().unwrap_or("").is_empty() {
            return Err(Error::Config(format!("endpoint {name}: base_url is required")));
        }
        Ok(())
    }

    pub fn batch_options(&self) -> BatchOptions {
        BatchOptions {
            max_parallel_requests: self.max_parallel_requests,
            retry: self.retry.clone(),
        }
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>> {
        match self.kind {
            EndpointKind::Mock => {
                let mut m = MockBackend::new(&self.model_id);
                if let Some(t) = &self.completion_text {
                    m = m.with_completion(t);
                }
                Ok(Box::new(m))
            }
            EndpointKind::OpenaiCompatible => {
                let token = match &self.auth_token_env_var_name {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Config(format!("environment variable {var} holding the API token is not set"))
                    })?),
                    None => None,
                };
                let b = OpenAiCompatBackend::new(
                    self.base_url.as_deref().unwrap_or_default(),
                    &self.model_id,
                    OpenAiOptions {
                        timeout: Some(Duration::from_secs(self.timeout_secs)),
                        bearer_token: token,
                        prompt_prefix: self.prompt_prefix.clone(),
                        echo_max_tokens: Some(self.echo_max_tokens),
                    },
                )?;
                Ok(Box::new(b))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    #[serde(flatten)]
    pub corpus: GenerationConfig,
    pub decoding: Decoding,
    /// Replaces the per-language token budget (8 EN, 10 DE).
    pub max_tokens_override: Option<usize>,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            corpus: GenerationConfig::default(),
            decoding: Decoding::Greedy,
            max_tokens_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSettings {
    pub annotators_en: Vec<String>,
    pub annotators_de: Vec<String>,
    pub bind: IpAddr,
    pub port: u16,
    pub ui_dir: Option<PathBuf>,
}

impl Default for AnnotationSettings {
    fn default() -> Self {
        Self {
            annotators_en: vec!["annotator1".into(), "annotator2".into(), "annotator3".into()],
            annotators_de: vec!["annotator1".into()],
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8765,
            ui_dir: None,
        }
    }
}

impl AnnotationSettings {
    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Directory with bank JSONL files; the bundled banks when absent.
    pub data_dir: Option<PathBuf>,
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub default_endpoint: String,
    pub generation: GenerationSettings,
    pub annotation: AnnotationSettings,
    pub bootstrap_resamples: usize,
}

impl Default for Config {
    fn default() -> Self {
        let mut endpoints = BTreeMap::new();
        endpoints.insert("mock".to_string(), EndpointConfig::mock());
        Self {
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("out"),
            data_dir: None,
            endpoints,
            default_endpoint: "mock".into(),
            generation: GenerationSettings::default(),
            annotation: AnnotationSettings::default(),
            bootstrap_resamples: 2000,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Config =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ep) in &self.endpoints {
            ep.validate(name)?;
        }
        if !self.endpoints.contains_key(&self.default_endpoint) {
            return Err(Error::Config(format!(
                "default_endpoint {:?} is not defined in endpoints",
                self.default_endpoint
            )));
        }
        if self.annotation.annotators_en.is_empty() || self.annotation.annotators_de.is_empty() {
            return Err(Error::Config("annotator lists must not be empty".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self, name: Option<&str>) -> Result<(&str, &EndpointConfig)> {
        let name = name.unwrap_or(&self.default_endpoint);
        self.endpoints
            .get_key_value(name)
            .map(|(k, v)| (k.as_str(), v))
            .ok_or_else(|| {
                let known: Vec<&str> = self.endpoints.keys().map(String::as_str).collect();
                Error::Config(format!("unknown endpoint {name:?}; configured: {}", known.join(", ")))
            })
    }

    /// SHA-256 of the canonical JSON form. The output directory is a location
    /// rather than a parameter and is left out.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("out_dir");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}
