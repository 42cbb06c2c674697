//! The operator configuration file (TOML). Unknown keys are rejected and
//! errors carry the file location.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::EndpointConfig;
use crate::game::{GameConfig, GameError};
use crate::metric::MetricConfig;
use crate::render::RenderStyle;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Game preset plus optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSection {
    pub preset: String,
    pub max_rounds: Option<usize>,
    pub total_time: Option<f64>,
    pub win_threshold: Option<f64>,
    pub submission_schedule: Option<Vec<f64>>,
    pub lives: Option<u32>,
    pub char_limit: Option<usize>,
    pub reveal_distance: Option<bool>,
}

impl Default for GameSection {
    fn default() -> Self {
        GameSection {
            preset: "dataset".into(),
            max_rounds: None,
            total_time: None,
            win_threshold: None,
            submission_schedule: None,
            lives: None,
            char_limit: None,
            reveal_distance: None,
        }
    }
}

impl GameSection {
    pub fn resolve(&self, metric: &MetricConfig) -> Result<GameConfig, GameError> {
        let mut g = GameConfig::preset(&self.preset)?;
        if let Some(v) = self.max_rounds {
            g.max_rounds = v;
        }
        if let Some(v) = self.total_time {
            g.total_time = Some(v);
        }
        if let Some(v) = self.win_threshold {
            g.win_threshold = v;
        }
        if let Some(v) = &self.submission_schedule {
            g.submission_schedule = Some(v.clone());
        }
        if let Some(v) = self.lives {
            g.lives = Some(v);
        }
        if let Some(v) = self.char_limit {
            g.char_limit = Some(v);
        }
        if let Some(v) = self.reveal_distance {
            g.reveal_distance = v;
        }
        g.metric = *metric;
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSettings {
    pub bind: String,
    /// Rollout records and event logs are written here.
    pub data_dir: PathBuf,
    pub heartbeat_secs: u64,
    /// How long a disconnected participant may rejoin.
    pub disconnect_grace_secs: u64,
    /// Optional newline-delimited file of designs to draw targets from.
    pub target_pool: Option<PathBuf>,
}

impl Default for ServerSettings {
    fn default() -> Self {
        ServerSettings {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            heartbeat_secs: 5,
            disconnect_grace_secs: 60,
            target_pool: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub seed: u64,
    pub metric: MetricConfig,
    pub render: RenderStyle,
    pub game: GameSection,
    pub endpoint: Option<EndpointConfig>,
    pub server: ServerSettings,
}

impl GlobalConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<GlobalConfig, ConfigError> {
        let cfg: GlobalConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<GlobalConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.metric.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.render.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.game_config()?;
        Ok(())
    }

    pub fn game_config(&self) -> Result<GameConfig, ConfigError> {
        self.game
            .resolve(&self.metric)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file() {
        let cfg = GlobalConfig::from_toml(
            r#"
seed = 7

[metric]
samples_per_curve = 12

[game]
preset = "text_refine"
char_limit = 150

[endpoint]
url = "http://localhost:9/v1/chat/completions"
model = "m"
api_key_env = "MAKER_API_KEY"

[server]
bind = "0.0.0.0:9000"
"#,
            "x.toml",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        let g = cfg.game_config().unwrap();
        assert_eq!((g.max_rounds, g.char_limit, g.metric.samples_per_curve), (3, Some(150), 12));
        assert_eq!(cfg.server.heartbeat_secs, 5);
        assert_eq!(cfg.endpoint.unwrap().api_key_env.as_deref(), Some("MAKER_API_KEY"));
    }

    #[test]
    fn unknown_keys_report_location() {
        let err = GlobalConfig::from_toml("[metric]\ncapp = 0.3\n", "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("bad.toml:"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("capp"), "{msg}");
        let err = GlobalConfig::from_toml("[game]\npreset = \"nope\"\n", "x.toml").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }
}
