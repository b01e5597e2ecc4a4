//! Runtime configuration: one TOML file, overridable from the environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::toolkit::external::ArtifactEncoding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub click_max_extent: f64,
    pub click_max_duration_ms: u64,
    pub tolerance: f64,
    /// Minimum routing score before asking the user instead.
    pub clarify: u32,
    pub highlight_half_window_s: f64,
    pub stroke_stride: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            click_max_extent: 0.01,
            click_max_duration_ms: 500,
            tolerance: 32.0,
            clarify: 3,
            highlight_half_window_s: 2.0,
            stroke_stride: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// `null`, `scripted:<path>` or `http:<url>`.
    pub backend: String,
    pub model: String,
    pub token: Option<String>,
    pub timeout_s: f64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: "null".into(),
            model: String::new(),
            token: None,
            timeout_s: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolsConfig {
    /// Base URLs of external tool servers.
    pub external: Vec<String>,
    pub encoding: ArtifactEncoding,
    pub timeout_s: f64,
}

impl Default for ToolsConfig {
    fn default() -> Self {
        Self {
            external: Vec::new(),
            encoding: ArtifactEncoding::Base64,
            timeout_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub listen: String,
    pub artifact_dir: PathBuf,
    /// Prefix for artifact URLs in responses, e.g. `https://host`. Relative
    /// URLs are returned when unset.
    pub public_base_url: Option<String>,
    pub cors_origin: Option<String>,
    pub llm: LlmConfig,
    pub tools: ToolsConfig,
    pub thresholds: Thresholds,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            artifact_dir: PathBuf::from("sessions"),
            public_base_url: None,
            cors_origin: None,
            llm: LlmConfig::default(),
            tools: ToolsConfig::default(),
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{var}: {reason}")]
    Env { var: String, reason: String },
}

fn parse_env<T: std::str::FromStr>(var: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e: T::Err| ConfigError::Env { var: var.into(), reason: e.to_string() })
}

impl Config {
    pub fn from_toml(raw: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(raw).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn load_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml(&raw, path)
    }

    /// Reads `path` if given, then applies `POINTCHAT_*` environment variables.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::load_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let var = |k: &str| get(&format!("POINTCHAT_{k}")).filter(|v| !v.is_empty());
        if let Some(v) = var("LISTEN") {
            self.listen = v;
        }
        if let Some(v) = var("ARTIFACT_DIR") {
            self.artifact_dir = v.into();
        }
        if let Some(v) = var("PUBLIC_BASE_URL") {
            self.public_base_url = Some(v);
        }
        if let Some(v) = var("CORS_ORIGIN") {
            self.cors_origin = Some(v);
        }
        if let Some(v) = var("LLM") {
            self.llm.backend = v;
        }
        if let Some(v) = var("LLM_MODEL") {
            self.llm.model = v;
        }
        if let Some(v) = var("LLM_TOKEN") {
            self.llm.token = Some(v);
        }
        if let Some(v) = var("LLM_TIMEOUT_S") {
            self.llm.timeout_s = parse_env("POINTCHAT_LLM_TIMEOUT_S", &v)?;
        }
        if let Some(v) = var("EXTERNAL_TOOLS") {
            self.tools.external = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
        if let Some(v) = var("TOOL_TIMEOUT_S") {
            self.tools.timeout_s = parse_env("POINTCHAT_TOOL_TIMEOUT_S", &v)?;
        }
        if let Some(v) = var("ARTIFACT_ENCODING") {
            self.tools.encoding = match v.as_str() {
                "base64" => ArtifactEncoding::Base64,
                "url" => ArtifactEncoding::Url,
                other => {
                    return Err(ConfigError::Env {
                        var: "POINTCHAT_ARTIFACT_ENCODING".into(),
                        reason: format!("`{other}` is not base64 or url"),
                    })
                }
            };
        }
        let t = &mut self.thresholds;
        if let Some(v) = var("CLICK_MAX_EXTENT") {
            t.click_max_extent = parse_env("POINTCHAT_CLICK_MAX_EXTENT", &v)?;
        }
        if let Some(v) = var("CLICK_MAX_DURATION_MS") {
            t.click_max_duration_ms = parse_env("POINTCHAT_CLICK_MAX_DURATION_MS", &v)?;
        }
        if let Some(v) = var("TOLERANCE") {
            t.tolerance = parse_env("POINTCHAT_TOLERANCE", &v)?;
        }
        if let Some(v) = var("CLARIFY_THRESHOLD") {
            t.clarify = parse_env("POINTCHAT_CLARIFY_THRESHOLD", &v)?;
        }
        if let Some(v) = var("HIGHLIGHT_HALF_WINDOW_S") {
            t.highlight_half_window_s = parse_env("POINTCHAT_HIGHLIGHT_HALF_WINDOW_S", &v)?;
        }
        Ok(())
    }
}
