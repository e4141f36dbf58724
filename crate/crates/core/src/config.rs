//! TOML run configuration. Relative paths resolve against the directory of
//! the config file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confnet::OptionOrder;
use crate::lattice::Scales;
use crate::llm::{
    CacheMode, HttpBackend, HttpConfig, LlmClient, LlmError, MockBackend, MockFallback,
    ResponseCache,
};
use crate::metrics::{AnswerNormalization, IntentMatching};
use crate::prompting::{PromptTemplates, RenderSettings};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: BackendConfig,
    pub cache: CacheConfig,
    pub lattice: LatticeConfig,
    pub prompt: PromptConfig,
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
    /// Cache only; every prompt must already be recorded.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFallbackKind {
    #[default]
    Lexical,
    Fixed,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model_id: String,
    pub in_flight: usize,
    pub max_tokens: u32,
    pub temperature: f64,
    pub http: HttpConfig,
    /// JSON object mapping prompt SHA-256 to response text.
    pub mock_responses: Option<PathBuf>,
    pub mock_fallback: MockFallbackKind,
    pub mock_fixed_text: String,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            model_id: "mock".into(),
            in_flight: 4,
            max_tokens: 32,
            temperature: 0.0,
            http: HttpConfig::default(),
            mock_responses: None,
            mock_fallback: MockFallbackKind::Lexical,
            mock_fixed_text: String::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub path: Option<PathBuf>,
    pub mode: CacheMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub acoustic_scale: f64,
    pub lm_scale: f64,
    pub nbest_k: usize,
    pub option_order: OptionOrder,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            acoustic_scale: 1.0,
            lm_scale: 1.0,
            nbest_k: 10,
            option_order: OptionOrder::Lattice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub template_path: Option<PathBuf>,
    /// Spoken questions carry no punctuation; add "?" before prompting.
    pub append_question_mark: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            template_path: None,
            append_question_mark: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub normalization: AnswerNormalization,
    pub intent_matching: IntentMatching,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut cfg = Self::parse(&read(path)?).map_err(|e| match e {
            ConfigError::Parse { reason, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.cache.path,
            &mut cfg.prompt.template_path,
            &mut cfg.backend.mock_responses,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<config>"),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.scales()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.lattice.nbest_k == 0 {
            return Err(ConfigError::Invalid("lattice.nbest_k must be at least 1".into()));
        }
        if self.backend.in_flight == 0 {
            return Err(ConfigError::Invalid("backend.in_flight must be at least 1".into()));
        }
        if !self.backend.temperature.is_finite() || self.backend.temperature < 0.0 {
            return Err(ConfigError::Invalid("backend.temperature must be non-negative".into()));
        }
        if self.backend.kind == BackendKind::Replay && self.cache.path.is_none() {
            return Err(ConfigError::Invalid("replay backend needs cache.path".into()));
        }
        if self.cache.mode != CacheMode::Off && self.cache.path.is_none() {
            return Err(ConfigError::Invalid("cache.mode set without cache.path".into()));
        }
        Ok(())
    }

    pub fn scales(&self) -> Result<Scales, crate::lattice::LatticeError> {
        Scales::new(self.lattice.acoustic_scale, self.lattice.lm_scale)
    }

    pub fn render_settings(&self) -> RenderSettings {
        RenderSettings {
            scales: self.scales().unwrap_or_default(),
            nbest_k: self.lattice.nbest_k,
            order: self.lattice.option_order,
        }
    }

    pub fn templates(&self) -> Result<PromptTemplates, ConfigError> {
        match &self.prompt.template_path {
            None => Ok(PromptTemplates::default()),
            Some(p) => PromptTemplates::parse(&read(p)?).map_err(|e| ConfigError::Parse {
                path: p.clone(),
                reason: e.to_string(),
            }),
        }
    }

    /// Model name recorded with each request and in run metadata.
    pub fn model_id(&self) -> &str {
        &self.backend.model_id
    }

    pub fn build_client(&self) -> Result<LlmClient, LlmError> {
        let b = &self.backend;
        let cache = match &self.cache.path {
            Some(p) if self.cache.mode != CacheMode::Off || b.kind == BackendKind::Replay => {
                Some(ResponseCache::open(p)?)
            }
            _ => None,
        };
        let client = match b.kind {
            BackendKind::Replay => {
                let cache = cache.ok_or_else(|| LlmError::Cache("replay needs cache.path".into()))?;
                return Ok(LlmClient::replay(cache, b.in_flight));
            }
            BackendKind::Http => LlmClient::new(Box::new(HttpBackend::new(b.http.clone())?), b.in_flight),
            BackendKind::Mock => {
                let fallback = match b.mock_fallback {
                    MockFallbackKind::Lexical => MockFallback::Lexical,
                    MockFallbackKind::Error => MockFallback::Error,
                    MockFallbackKind::Fixed => MockFallback::Fixed(b.mock_fixed_text.clone()),
                };
                let mut mock = MockBackend::new(fallback);
                if let Some(p) = &b.mock_responses {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| LlmError::Cache(format!("{}: {e}", p.display())))?;
                    let map: HashMap<String, String> = serde_json::from_str(&text)
                        .map_err(|e| LlmError::Cache(format!("{}: {e}", p.display())))?;
                    mock = mock.with_responses(map);
                }
                LlmClient::new(Box::new(mock), b.in_flight)
            }
        };
        Ok(match cache {
            Some(c) => client.with_cache(c, self.cache.mode),
            None => client,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_document() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.render_settings(), RenderSettings::default());
        assert!(cfg.prompt.append_question_mark);
    }

    #[test]
    fn full_document() {
        let cfg = Config::parse(
            r#"
            [backend]
            kind = "http"
            model_id = "gpt-3.5-turbo"
            in_flight = 8
            [backend.http]
            base_url = "https://api.example.org/v1"
            api_key_env = "MY_KEY"
            requests_per_minute = 60
            [cache]
            path = "cache.jsonl"
            mode = "read_write"
            [lattice]
            acoustic_scale = 0.0833
            option_order = "posterior"
            [metrics]
            normalization = "raw"
            intent_matching = "exact_only"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.backend.kind, BackendKind::Http);
        assert_eq!(cfg.backend.http.requests_per_minute, Some(60));
        assert_eq!(cfg.backend.http.max_attempts, 5);
        assert_eq!(cfg.cache.mode, CacheMode::ReadWrite);
        assert_eq!(cfg.lattice.lm_scale, 1.0);
        assert_eq!(cfg.lattice.option_order, OptionOrder::Posterior);
        assert_eq!(cfg.metrics.normalization, AnswerNormalization::Raw);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::parse("[lattice]\nacoustic_scale = -1.0").is_err());
        assert!(Config::parse("[lattice]\nnbest_k = 0").is_err());
        assert!(Config::parse("[backend]\nkind = \"replay\"").is_err());
        assert!(Config::parse("[backend]\nmodel = \"x\"").is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[cache]\npath = \"c.jsonl\"\nmode = \"read_write\"\n").unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.cache.path.as_deref(), Some(dir.path().join("c.jsonl").as_path()));
        let client = cfg.build_client().unwrap();
        assert_eq!(client.in_flight_limit(), 4);
        assert!(dir.path().join("c.jsonl").exists());
    }
}
