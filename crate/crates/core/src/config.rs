//! Run configuration: one JSON document plus `key=value` overrides.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::assoc::InstanceConfig;
use crate::evaluate::EvalConfig;
use crate::tracker::TrackerConfig;
use crate::violate::ConsolidationConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("override {0:?} is not of the form key=value")]
    BadOverride(String),
    #[error("config value out of range: {0}")]
    Range(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub instance: InstanceConfig,
    pub consolidation: ConsolidationConfig,
    pub evaluation: EvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.tracker.validate().map_err(ConfigError::Range)?;
        self.consolidation.validate().map_err(ConfigError::Range)?;
        self.evaluation.validate().map_err(ConfigError::Range)?;
        let i = &self.instance;
        if !(0.0..=1.0).contains(&i.tau_assoc) {
            return Err(ConfigError::Range(format!("tau_assoc must be in [0,1], got {}", i.tau_assoc)));
        }
        if i.max_riders == 0 {
            return Err(ConfigError::Range("max_riders must be >= 1".into()));
        }
        Ok(())
    }

    /// Applies `section.key=value` overrides. Values are parsed as JSON and
    /// fall back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ConfigError> {
        let mut v = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.into()))?;
            let slot = key
                .split('.')
                .try_fold(&mut v, |node, part| node.get_mut(part))
                .ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
            if slot.is_object() {
                return Err(ConfigError::UnknownKey(key.into()));
            }
            *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
        }
        let cfg: Self = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every leaf key with its default value, one `key = value` per line.
    pub fn documented_keys() -> Vec<String> {
        fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
            match v {
                Value::Object(m) => {
                    for (k, x) in m {
                        let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&p, x, out);
                    }
                }
                _ => out.push(format!("{prefix} = {v}")),
            }
        }
        let mut out = Vec::new();
        walk("", &serde_json::to_value(Self::default()).expect("default config serializes"), &mut out);
        out
    }
}
