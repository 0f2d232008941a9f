//! JSON config shared by all subcommands.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use voxkit_core::datagen::PipelineConfig;
use voxkit_core::model::Profile;
use voxkit_core::orchestrator::TurnConfig;
use voxkit_core::policy::HttpBackendConfig;

use crate::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub backend: Option<BackendSection>,
    #[serde(default)]
    pub turn: TurnConfig,
    #[serde(default)]
    pub profile: Profile,
    /// Tool names loaded into the local set at session start.
    #[serde(default)]
    pub local_tools: Option<Vec<String>>,
    /// Every tool call is posted here when set.
    #[serde(default)]
    pub tool_endpoint: Option<String>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default)]
    pub ratio: Option<String>,
    #[serde(default)]
    pub tool_categories: Option<Vec<String>>,
    #[serde(default)]
    pub concurrency: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub endpoint: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub max_retries: Option<u32>,
    #[serde(default)]
    pub timeout_s: Option<f64>,
}

fn default_model() -> String {
    "default".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySection {
    Stub {
        #[serde(default = "default_stub_score")]
        score: f64,
    },
    Llm,
}

fn default_stub_score() -> f64 {
    8.0
}

impl Default for StrategySection {
    fn default() -> Self {
        StrategySection::Stub {
            score: default_stub_score(),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&raw, |name| std::env::var(name).ok())
            .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(raw: &str, env: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let text = interpolate(raw, env)?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }

    /// Backend settings from the config, falling back to the environment.
    pub fn http_backend(&self) -> Result<HttpBackendConfig, Failure> {
        let Some(b) = &self.backend else {
            return HttpBackendConfig::from_env().map_err(|e| Failure::Usage(e.to_string()));
        };
        let mut config = HttpBackendConfig::new(&b.endpoint, &b.model);
        config.api_key = b.api_key.clone().filter(|k| !k.is_empty());
        if let Some(n) = b.max_retries {
            config.max_retries = n;
        }
        if let Some(t) = b.timeout_s {
            config.timeout = Duration::try_from_secs_f64(t)
                .map_err(|_| Failure::Usage(format!("bad timeout_s {t}")))?;
        }
        Ok(config)
    }
}

/// Replaces `${NAME}` with the value of the environment variable `NAME`.
/// The value is JSON-escaped, so it is meant for use inside string literals.
pub fn interpolate(raw: &str, env: impl Fn(&str) -> Option<String>) -> Result<String, String> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| "unterminated ${ in config".to_string())?;
        let name = &after[..end];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("bad variable name `{name}`"));
        }
        let value = env(name).ok_or_else(|| format!("environment variable {name} is not set"))?;
        let quoted = serde_json::to_string(&value).expect("strings serialize");
        out.push_str(&quoted[1..quoted.len() - 1]);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}
