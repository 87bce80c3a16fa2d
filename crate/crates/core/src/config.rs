//! Pipeline configuration: the checked-in defaults plus dotted overrides.

use crate::extraction::ExtractionConfig;
use crate::fusion::FusionConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Contents of `config/defaults.toml`.
pub const DEFAULTS_TOML: &str = include_str!("../../../config/defaults.toml");

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("malformed override {0:?}, expected section.key=value")]
    MalformedOverride(String),
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub extraction: ExtractionConfig,
    pub fusion: FusionConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The checked-in defaults.
    pub fn defaults() -> Self {
        Self::from_toml(DEFAULTS_TOML).expect("shipped defaults parse")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.fusion.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let e = &self.extraction;
        let non_negative = [e.eps_m_occ, e.eps_p_occ, e.eps_v_c, e.eps_var_vx, e.eps_var_vy, e.eps_d0, e.eps_ratio];
        if non_negative.iter().any(|v| !(*v >= 0.0)) {
            return Err(ConfigError::Invalid("extraction thresholds must be non-negative".into()));
        }
        if !(e.eps_pos > 0.0 && e.eps_vel > 0.0 && e.cv_gate > 0.0) {
            return Err(ConfigError::Invalid("extraction neighborhoods and gate must be positive".into()));
        }
        if e.min_cluster_cells == 0 {
            return Err(ConfigError::Invalid("min_cluster_cells must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies one `section.key=value` override. The key must already
    /// exist; the value is read as a TOML value, or as a string if it is
    /// not one.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::MalformedOverride(spec.to_string()))?;
        let key = key.trim();
        let path: Vec<&str> = key.split('.').collect();
        if path.len() < 2 || path.iter().any(|p| p.is_empty()) {
            return Err(ConfigError::MalformedOverride(spec.to_string()));
        }
        let value = parse_value(raw.trim());
        let mut table = toml::Table::try_from(*self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let (last, parents) = path.split_last().expect("at least two parts");
        let mut cur = &mut table;
        for p in parents {
            cur = cur
                .get_mut(*p)
                .and_then(|v| v.as_table_mut())
                .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        }
        let slot = cur.get_mut(*last).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        if slot.is_table() {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        // integers are accepted where floats are expected
        *slot = match (&*slot, value) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(format!("{key}: {}", e.message())))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    pub fn with_overrides<S: AsRef<str>>(mut self, overrides: &[S]) -> Result<Self, ConfigError> {
        for o in overrides {
            self.apply_override(o.as_ref())?;
        }
        Ok(self)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
