//! Flat `section.key = value` run configuration.
//!
//! Values are JSON literals (`0.95`, `true`, `[256, 128]`); anything that
//! does not parse as JSON is taken as a bare string (`lsgan`). Lines starting
//! with `#` and blank lines are ignored.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::AdversaryConfig;
use crate::curiosity::CuriosityConfig;
use crate::him::HimConfig;
use crate::sim::{RandomizationRanges, RobotMorphology, SimConfig};
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {msg}")]
    Type { key: String, msg: String },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub sim: SimConfig,
    pub morphology: RobotMorphology,
    pub randomization: RandomizationRanges,
    pub adversary: AdversaryConfig,
    pub him: HimConfig,
    pub curiosity: CuriosityConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.train.validate()?;
        self.sim.validate().map_err(|e| format!("sim: {e}"))?;
        self.morphology.validate().map_err(|e| format!("morphology: {e}"))?;
        self.randomization.validate().map_err(|e| format!("randomization: {e}"))?;
        self.adversary.validate()?;
        self.him.validate()?;
        if self.curiosity.bits == 0 || self.curiosity.bits > 64 {
            return Err(format!("curiosity.bits must lie in [1, 64], got {}", self.curiosity.bits));
        }
        if self.him.history_len != self.sim.history_len {
            return Err(format!(
                "him.history_len ({}) must equal sim.history_len ({})",
                self.him.history_len, self.sim.history_len
            ));
        }
        Ok(())
    }

    /// One `key = value` line per leaf, keys sorted.
    pub fn canonical_text(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let mut leaves = Vec::new();
        flatten("", &v, &mut leaves);
        leaves.sort();
        let mut out = String::new();
        for (k, v) in leaves {
            out.push_str(&k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }

    /// Canonical text with the three arm toggles and the criterion removed;
    /// equal for configs that differ only in those.
    pub fn hash_without_toggles(&self) -> String {
        let mut c = self.clone();
        c.train.use_him = false;
        c.train.use_curiosity = false;
        c.adversary.criterion = crate::adversary::Criterion::Lsgan;
        c.adversary.reward_map = crate::adversary::RewardMap::LsganQuadratic;
        c.hash()
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self, ConfigError> {
        Self::from_text_with(text, origin, &[])
    }

    /// Parses `text`, applies `overrides` (`key=value`) after the file
    /// values and validates.
    pub fn from_text_with(text: &str, origin: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut root = serde_json::to_value(RunConfig::default()).expect("config serializes");
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
            })?;
            set_key(&mut root, k.trim(), v.trim())?;
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or(ConfigError::Syntax {
                path: "--set".to_string(),
                line: 0,
            })?;
            set_key(&mut root, k.trim(), v.trim())?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| ConfigError::Type {
            key: e.path().to_string(),
            msg: e.inner().to_string(),
        })?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text_with(&text, &path.display().to_string(), overrides)
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        other => out.push((prefix.to_string(), serde_json::to_string(other).expect("leaf serializes"))),
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "table",
    }
}

fn set_key(root: &mut Value, key: &str, raw: &str) -> Result<(), ConfigError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map: &mut Map<String, Value> = match node {
            Value::Object(m) => m,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        };
        let child = map.get_mut(*part).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        if i + 1 == parts.len() {
            let new = parse_value(raw);
            let compatible = match (&*child, &new) {
                // enum variants may switch between unit (string) and struct (table)
                (Value::String(_), Value::Object(_)) | (Value::Object(_), Value::String(_)) => true,
                (a, b) => kind(a) == kind(b),
            };
            if !compatible {
                return Err(ConfigError::Type {
                    key: key.to_string(),
                    msg: format!("expected {}, got {}", kind(child), kind(&new)),
                });
            }
            *child = new;
            return Ok(());
        }
        node = child;
    }
    Err(ConfigError::UnknownKey(key.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = RunConfig::from_text("", "t").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = RunConfig::default();
        c.train.gamma = 0.1 + 0.2;
        c.adversary.criterion = crate::adversary::Criterion::WganDiv;
        let back = RunConfig::from_text(&c.canonical_text(), "t").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_and_mistyped_keys_name_the_key() {
        let e = RunConfig::from_text("train.gama = 0.9", "t").unwrap_err();
        assert!(e.to_string().contains("train.gama"));
        let e = RunConfig::from_text("train.gamma = fast", "t").unwrap_err();
        assert!(e.to_string().contains("train.gamma"));
        let e = RunConfig::from_text("train", "t").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn enums_use_snake_case() {
        let c = RunConfig::from_text("adversary.criterion = wgan_div\nsim.terrain = {\"bumps\": {\"amplitude\": 0.02, \"wavelength\": 0.5}}", "t").unwrap();
        assert_eq!(c.adversary.criterion, crate::adversary::Criterion::WganDiv);
        assert!(matches!(c.sim.terrain, crate::sim::Terrain::Bumps { .. }));
        assert!(RunConfig::from_text("adversary.criterion = hinge", "t").is_err());
    }
}
