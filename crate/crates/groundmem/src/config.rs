//! Service configuration.
//!
//! Layers, later wins: built-in defaults, a TOML file, `MEM_*` environment
//! variables, command-line flags. [`ServiceConfig::validate`] names the
//! offending key in every error.

use std::path::{Path, PathBuf};
use std::time::Duration;

use groundmem_core::agent::{AgentConfig, RerankMode, RouterMode};
use groundmem_core::expansion::ExpansionParams;
use groundmem_core::perception::PerceptionParams;
use groundmem_core::providers::RetryPolicy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("invalid config `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Stub,
    Live,
}

impl std::str::FromStr for ProviderMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stub" => Ok(ProviderMode::Stub),
            "live" => Ok(ProviderMode::Live),
            _ => Err(format!("expected `stub` or `live`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub mode: ProviderMode,
    pub base_url: String,
    pub api_key: Option<String>,
    pub chat_model: Option<String>,
    pub embed_model: Option<String>,
    /// JSON list of `{match, response}` rules for the stub chat provider.
    pub stub_script: Option<PathBuf>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub retry_base_ms: u64,
    pub max_concurrent: usize,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Stub,
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            chat_model: None,
            embed_model: None,
            stub_script: None,
            timeout_secs: 60,
            max_attempts: 3,
            retry_base_ms: 500,
            max_concurrent: 4,
        }
    }
}

impl ProviderSettings {
    pub fn chat_model(&self) -> String {
        self.chat_model.clone().unwrap_or_else(|| match self.mode {
            ProviderMode::Stub => "stub".into(),
            ProviderMode::Live => "gpt-4o".into(),
        })
    }

    pub fn embed_model(&self) -> String {
        self.embed_model.clone().unwrap_or_else(|| match self.mode {
            ProviderMode::Stub => "stub".into(),
            ProviderMode::Live => "text-embedding-3-small".into(),
        })
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy { max_attempts: self.max_attempts, base_delay: Duration::from_millis(self.retry_base_ms) }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionSettings {
    pub sample_rate_hz: f64,
    pub every_nth: usize,
    pub window_size: usize,
}

impl Default for PerceptionSettings {
    fn default() -> Self {
        let p = PerceptionParams::default();
        Self { sample_rate_hz: p.sample_rate_hz, every_nth: p.every_nth, window_size: p.window_size }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionSettings {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub top_m: usize,
}

impl Default for ExpansionSettings {
    fn default() -> Self {
        let p = ExpansionParams::default();
        Self { damping: p.damping, tolerance: p.tolerance, max_iter: p.max_iter, top_m: p.top_m }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RouterSetting {
    #[default]
    Heuristic,
    Provider,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RerankSetting {
    #[default]
    Overlap,
    Provider,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSettings {
    pub k: usize,
    pub max_context_notes: usize,
    pub max_context_chars: usize,
    pub router: RouterSetting,
    pub rerank: RerankSetting,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        let a = AgentConfig::default();
        Self {
            k: a.k,
            max_context_notes: a.max_context_notes,
            max_context_chars: a.max_context_chars,
            router: RouterSetting::Heuristic,
            rerank: RerankSetting::Overlap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: String,
    pub provider: ProviderSettings,
    pub perception: PerceptionSettings,
    pub expansion: ExpansionSettings,
    pub retrieval: RetrievalSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("groundmem-data"),
            bind: "127.0.0.1:8080".into(),
            provider: ProviderSettings::default(),
            perception: PerceptionSettings::default(),
            expansion: ExpansionSettings::default(),
            retrieval: RetrievalSettings::default(),
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub bind: Option<String>,
    pub provider_mode: Option<ProviderMode>,
    pub stub_script: Option<PathBuf>,
    pub chat_model: Option<String>,
    pub embed_model: Option<String>,
    pub damping: Option<f64>,
    pub expansion_top_m: Option<usize>,
    pub k: Option<usize>,
    pub router: Option<RouterSetting>,
    pub rerank: Option<RerankSetting>,
}

pub const ENV_VARS: [&str; 8] = [
    "MEM_DATA_DIR",
    "MEM_BIND",
    "MEM_PROVIDER_MODE",
    "MEM_PROVIDER_BASE_URL",
    "MEM_PROVIDER_API_KEY",
    "MEM_CHAT_MODEL",
    "MEM_EMBED_MODEL",
    "MEM_STUB_SCRIPT",
];

impl ServiceConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::File { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::File { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_toml(&text, path)
    }

    /// Applies `MEM_*` variables read through `get`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("MEM_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("MEM_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("MEM_PROVIDER_MODE") {
            self.provider.mode = v.parse().map_err(|m: String| invalid("MEM_PROVIDER_MODE", m))?;
        }
        if let Some(v) = get("MEM_PROVIDER_BASE_URL") {
            self.provider.base_url = v;
        }
        if let Some(v) = get("MEM_PROVIDER_API_KEY") {
            self.provider.api_key = Some(v);
        }
        if let Some(v) = get("MEM_CHAT_MODEL") {
            self.provider.chat_model = Some(v);
        }
        if let Some(v) = get("MEM_EMBED_MODEL") {
            self.provider.embed_model = Some(v);
        }
        if let Some(v) = get("MEM_STUB_SCRIPT") {
            self.provider.stub_script = Some(v.into());
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(v) = &o.data_dir {
            self.data_dir = v.clone();
        }
        if let Some(v) = &o.bind {
            self.bind = v.clone();
        }
        if let Some(v) = o.provider_mode {
            self.provider.mode = v;
        }
        if let Some(v) = &o.stub_script {
            self.provider.stub_script = Some(v.clone());
        }
        if let Some(v) = &o.chat_model {
            self.provider.chat_model = Some(v.clone());
        }
        if let Some(v) = &o.embed_model {
            self.provider.embed_model = Some(v.clone());
        }
        if let Some(v) = o.damping {
            self.expansion.damping = v;
        }
        if let Some(v) = o.expansion_top_m {
            self.expansion.top_m = v;
        }
        if let Some(v) = o.k {
            self.retrieval.k = v;
        }
        if let Some(v) = o.router {
            self.retrieval.router = v;
        }
        if let Some(v) = o.rerank {
            self.retrieval.rerank = v;
        }
    }

    /// Defaults, then `file`, then the environment, then `overrides`.
    pub fn load(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        overrides: &Overrides,
    ) -> Result<Self, ConfigError> {
        let mut config = match file {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        config.apply_env(env)?;
        config.apply_overrides(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.data_dir.as_os_str().is_empty() {
            return Err(invalid("data_dir", "must not be empty"));
        }
        if self.bind.parse::<std::net::SocketAddr>().is_err() {
            return Err(invalid("bind", format!("`{}` is not a host:port socket address", self.bind)));
        }
        let p = &self.provider;
        if p.mode == ProviderMode::Live {
            if !(p.base_url.starts_with("http://") || p.base_url.starts_with("https://")) {
                return Err(invalid("provider.base_url", format!("`{}` is not an http(s) URL", p.base_url)));
            }
        }
        if p.max_attempts == 0 {
            return Err(invalid("provider.max_attempts", "must be at least 1"));
        }
        if p.max_concurrent == 0 {
            return Err(invalid("provider.max_concurrent", "must be at least 1"));
        }
        if p.timeout_secs == 0 {
            return Err(invalid("provider.timeout_secs", "must be at least 1"));
        }
        self.perception_params()
            .validate()
            .map_err(|e| invalid(perception_key(&e.to_string()), e.to_string()))?;
        let x = &self.expansion;
        if !(x.damping > 0.0 && x.damping < 1.0) {
            return Err(invalid("expansion.damping", format!("{} is outside (0, 1)", x.damping)));
        }
        if !(x.tolerance > 0.0) {
            return Err(invalid("expansion.tolerance", "must be positive"));
        }
        if x.max_iter == 0 {
            return Err(invalid("expansion.max_iter", "must be at least 1"));
        }
        if x.top_m == 0 {
            return Err(invalid("expansion.top_m", "must be at least 1"));
        }
        let r = &self.retrieval;
        if r.k == 0 {
            return Err(invalid("retrieval.k", "must be at least 1"));
        }
        if r.max_context_notes == 0 {
            return Err(invalid("retrieval.max_context_notes", "must be at least 1"));
        }
        if r.max_context_chars == 0 {
            return Err(invalid("retrieval.max_context_chars", "must be at least 1"));
        }
        Ok(())
    }

    pub fn perception_params(&self) -> PerceptionParams {
        let p = &self.perception;
        PerceptionParams { sample_rate_hz: p.sample_rate_hz, every_nth: p.every_nth, window_size: p.window_size }
    }

    pub fn expansion_params(&self) -> ExpansionParams {
        let x = &self.expansion;
        ExpansionParams { damping: x.damping, tolerance: x.tolerance, max_iter: x.max_iter, top_m: x.top_m }
    }

    pub fn agent_config(&self) -> AgentConfig {
        let r = &self.retrieval;
        AgentConfig {
            k: r.k,
            expansion: self.expansion_params(),
            max_context_notes: r.max_context_notes,
            max_context_chars: r.max_context_chars,
            chat_model: self.provider.chat_model(),
            router: match r.router {
                RouterSetting::Heuristic => RouterMode::Heuristic,
                RouterSetting::Provider => RouterMode::Provider,
            },
            rerank: match r.rerank {
                RerankSetting::Overlap => RerankMode::Overlap,
                RerankSetting::Provider => RerankMode::Provider,
                RerankSetting::Off => RerankMode::Off,
            },
        }
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.data_dir.join("memory.json")
    }
}

fn perception_key(message: &str) -> &'static str {
    if message.contains("sample_rate_hz") {
        "perception.sample_rate_hz"
    } else if message.contains("every_nth") {
        "perception.every_nth"
    } else {
        "perception.window_size"
    }
}
