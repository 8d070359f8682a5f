use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asr::ConfidenceThresholds;
use crate::bioacoustics::{DistressParams, DistressWeights, VoicingParams};
use crate::content::{ContentParams, ContentWeights};
use crate::queue::{QueueLevel, RoutingThresholds};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Service configuration, loadable from TOML. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Config {
    pub thresholds: RoutingThresholds,
    pub distress_weights: DistressWeights,
    pub voicing: VoicingParams,
    pub content_weights: ContentWeights,
    pub backends: BackendConfig,
    pub service: ServiceConfig,
    pub sla_hints: SlaHints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub asr_url: String,
    pub asr_timeout_secs: f64,
    pub llm_url: String,
    pub llm_model: String,
    pub llm_timeout_secs: f64,
    pub language_hint: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            asr_url: "http://127.0.0.1:9000/transcribe".into(),
            asr_timeout_secs: 60.0,
            llm_url: "http://127.0.0.1:11434/api/generate".into(),
            llm_model: "llama3:8b".into(),
            llm_timeout_secs: 90.0,
            language_hint: Some("en".into()),
        }
    }
}

impl BackendConfig {
    pub fn asr_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.asr_timeout_secs)
    }

    pub fn llm_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.llm_timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub worker_pool_size: usize,
    pub storage_path: PathBuf,
    pub bind: String,
    /// When set, every API request must carry `Authorization: Bearer <token>`.
    pub api_token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            worker_pool_size: 2,
            storage_path: PathBuf::from("calltriage-data"),
            bind: "127.0.0.1:8080".into(),
            api_token: None,
        }
    }
}

/// Response-time expectations shown next to each level. Only Q1 and Q2
/// have defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlaHints {
    pub q1: Option<String>,
    pub q2: Option<String>,
    pub q3: Option<String>,
    pub q5: Option<String>,
}

impl Default for SlaHints {
    fn default() -> Self {
        Self {
            q1: Some("within seconds".into()),
            q2: Some("within 1-2 minutes".into()),
            q3: None,
            q5: None,
        }
    }
}

impl SlaHints {
    pub fn for_level(&self, level: QueueLevel) -> Option<&str> {
        match level {
            QueueLevel::Q1Immediate => self.q1.as_deref(),
            QueueLevel::Q2Elevated => self.q2.as_deref(),
            QueueLevel::Q3Monitor => self.q3.as_deref(),
            QueueLevel::Q5Routine | QueueLevel::Q5Review => self.q5.as_deref(),
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.distress_weights
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let t = &self.thresholds;
        let unit = [
            ("confidence_high", t.confidence_high),
            ("confidence_very_low", t.confidence_very_low),
            ("distress_high", t.distress_high),
            ("early_exit_distress", t.early_exit_distress),
            ("early_exit_confidence", t.early_exit_confidence),
            ("extreme_distress", t.extreme_distress),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!(
                    "{name} must be in [0, 1], got {v}"
                )));
            }
        }
        if t.confidence_very_low > t.confidence_high {
            return Err(ConfigError::Invalid(
                "confidence_very_low must not exceed confidence_high".into(),
            ));
        }
        if t.content_high > 100 {
            return Err(ConfigError::Invalid(
                "content_high must be at most 100".into(),
            ));
        }
        if self.service.worker_pool_size == 0 {
            return Err(ConfigError::Invalid(
                "worker_pool_size must be at least 1".into(),
            ));
        }
        if self.backends.asr_timeout_secs <= 0.0 || self.backends.llm_timeout_secs <= 0.0 {
            return Err(ConfigError::Invalid(
                "backend timeouts must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn confidence_thresholds(&self) -> ConfidenceThresholds {
        ConfidenceThresholds {
            high: self.thresholds.confidence_high,
            very_low: self.thresholds.confidence_very_low,
        }
    }

    pub fn distress_params(&self) -> DistressParams {
        DistressParams {
            weights: self.distress_weights,
            high_threshold: self.thresholds.distress_high,
        }
    }

    pub fn content_params(&self) -> ContentParams {
        ContentParams {
            weights: self.content_weights,
            high_threshold: self.thresholds.content_high,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml_str("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.thresholds.confidence_high, 0.7);
        assert_eq!(cfg.service.worker_pool_size, 2);
    }

    #[test]
    fn partial_override() {
        let cfg = Config::from_toml_str(
            r#"
            [thresholds]
            confidence_high = 0.75

            [content_weights.hazard]
            medical = 28

            [service]
            worker_pool_size = 4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.thresholds.confidence_high, 0.75);
        assert_eq!(cfg.thresholds.confidence_very_low, 0.4);
        assert_eq!(cfg.content_weights.hazard.medical, 28);
        assert_eq!(cfg.content_weights.hazard.fire, 25);
        assert_eq!(cfg.service.worker_pool_size, 4);
    }

    #[test]
    fn rejects_bad_weights_and_thresholds() {
        assert!(Config::from_toml_str("[distress_weights]\npitch = 0.9\n").is_err());
        assert!(Config::from_toml_str("[thresholds]\nconfidence_very_low = 0.8\n").is_err());
        assert!(Config::from_toml_str("[service]\nworker_pool_size = 0\n").is_err());
    }

    #[test]
    fn sla_defaults_only_for_top_levels() {
        let s = SlaHints::default();
        assert!(s.for_level(QueueLevel::Q1Immediate).is_some());
        assert!(s.for_level(QueueLevel::Q2Elevated).is_some());
        assert!(s.for_level(QueueLevel::Q3Monitor).is_none());
    }
}
