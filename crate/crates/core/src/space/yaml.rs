//! YAML form of [`HyperConfig`].
//!
//! Writing goes through serde. Reading walks the mapping by hand so every
//! error names the offending key.

use serde::de::DeserializeOwned;
use serde_yaml::{Mapping, Value};
use thiserror::Error;

use super::{HyperConfig, LossWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid yaml: {0}")]
    Syntax(String),
    #[error("config must be a yaml mapping")]
    NotAMapping,
    #[error("{0}: missing")]
    Missing(String),
    #[error("{0}: unknown key")]
    UnknownKey(String),
    #[error("{key}: unsupported value `{value}`")]
    Unsupported { key: String, value: String },
    #[error("{key}: expected {expected}")]
    WrongType { key: String, expected: &'static str },
}

impl ConfigError {
    /// Key the error refers to, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Missing(k) | ConfigError::UnknownKey(k) => Some(k),
            ConfigError::Unsupported { key, .. } | ConfigError::WrongType { key, .. } => Some(key),
            _ => None,
        }
    }
}

pub const CONFIG_KEYS: [&str; 13] = [
    "net_type",
    "activation",
    "width",
    "depth",
    "optimizer",
    "initializer",
    "learning_rate",
    "n_domain",
    "n_boundary",
    "n_initial",
    "loss_weights",
    "train_iters",
    "seed",
];

const WEIGHT_KEYS: [&str; 3] = ["pde", "bc", "ic"];

pub fn to_yaml(config: &HyperConfig) -> String {
    serde_yaml::to_string(config).expect("config serializes to yaml")
}

pub fn from_yaml(text: &str) -> Result<HyperConfig, ConfigError> {
    let value: Value = serde_yaml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let map = value.as_mapping().ok_or(ConfigError::NotAMapping)?;
    check_keys(map, &CONFIG_KEYS, "")?;

    let weights = lookup(map, "loss_weights", "loss_weights")?;
    let wmap = weights.as_mapping().ok_or_else(|| ConfigError::WrongType {
        key: "loss_weights".into(),
        expected: "a mapping with keys pde, bc, ic",
    })?;
    check_keys(wmap, &WEIGHT_KEYS, "loss_weights.")?;

    Ok(HyperConfig {
        net_type: categorical(map, "net_type")?,
        activation: categorical(map, "activation")?,
        width: scalar(map, "width", "an unsigned integer")?,
        depth: scalar(map, "depth", "an unsigned integer")?,
        optimizer: categorical(map, "optimizer")?,
        initializer: categorical(map, "initializer")?,
        learning_rate: real(map, "learning_rate", "learning_rate")?,
        n_domain: scalar(map, "n_domain", "an unsigned integer")?,
        n_boundary: scalar(map, "n_boundary", "an unsigned integer")?,
        n_initial: scalar(map, "n_initial", "an unsigned integer")?,
        loss_weights: LossWeights {
            pde: real(wmap, "pde", "loss_weights.pde")?,
            bc: real(wmap, "bc", "loss_weights.bc")?,
            ic: real(wmap, "ic", "loss_weights.ic")?,
        },
        train_iters: scalar(map, "train_iters", "an unsigned integer")?,
        seed: scalar(map, "seed", "an unsigned integer")?,
    })
}

fn check_keys(map: &Mapping, allowed: &[&str], prefix: &str) -> Result<(), ConfigError> {
    for k in map.keys() {
        let name = k
            .as_str()
            .ok_or_else(|| ConfigError::UnknownKey(format!("{prefix}{k:?}")))?;
        if !allowed.contains(&name) {
            return Err(ConfigError::UnknownKey(format!("{prefix}{name}")));
        }
    }
    Ok(())
}

fn lookup<'a>(map: &'a Mapping, key: &str, path: &str) -> Result<&'a Value, ConfigError> {
    map.get(key).ok_or_else(|| ConfigError::Missing(path.to_string()))
}

fn categorical<T: DeserializeOwned>(map: &Mapping, key: &str) -> Result<T, ConfigError> {
    let v = lookup(map, key, key)?;
    let s = v.as_str().ok_or_else(|| ConfigError::WrongType {
        key: key.into(),
        expected: "a string",
    })?;
    serde_yaml::from_value(v.clone()).map_err(|_| ConfigError::Unsupported {
        key: key.into(),
        value: s.to_string(),
    })
}

fn scalar<T: DeserializeOwned>(map: &Mapping, key: &str, expected: &'static str) -> Result<T, ConfigError> {
    let v = lookup(map, key, key)?;
    serde_yaml::from_value(v.clone()).map_err(|_| ConfigError::WrongType {
        key: key.into(),
        expected,
    })
}

fn real(map: &Mapping, key: &str, path: &str) -> Result<f64, ConfigError> {
    let v = lookup(map, key, path)?;
    v.as_f64().ok_or_else(|| ConfigError::WrongType {
        key: path.into(),
        expected: "a number",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::SearchSpace;

    fn sample() -> HyperConfig {
        SearchSpace::tree(true).random_sample(5)
    }

    #[test]
    fn round_trip() {
        let c = sample();
        assert_eq!(from_yaml(&to_yaml(&c)).unwrap(), c);
    }

    #[test]
    fn keys_follow_schema_order() {
        let text = to_yaml(&sample());
        let keys: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with(' '))
            .map(|l| l.split(':').next().unwrap())
            .collect();
        assert_eq!(keys, CONFIG_KEYS);
    }

    #[test]
    fn unsupported_optimizer() {
        let text = to_yaml(&sample()).replace(
            &format!(
                "optimizer: {}",
                serde_yaml::to_string(&sample().optimizer).unwrap().trim()
            ),
            "optimizer: lbfgs",
        );
        let err = from_yaml(&text).unwrap_err();
        assert_eq!(err.to_string(), "optimizer: unsupported value `lbfgs`");
        assert!(err.to_string().starts_with("optimizer: unsupported value"));
    }

    #[test]
    fn missing_depth() {
        let text: String = to_yaml(&sample())
            .lines()
            .filter(|l| !l.starts_with("depth:"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(from_yaml(&text).unwrap_err().to_string(), "depth: missing");
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = format!("{}batch_size: 32\n", to_yaml(&sample()));
        assert_eq!(
            from_yaml(&text).unwrap_err(),
            ConfigError::UnknownKey("batch_size".into())
        );
        let nested = to_yaml(&sample()).replace("  ic:", "  extra: 1.0\n  ic:");
        assert_eq!(
            from_yaml(&nested).unwrap_err(),
            ConfigError::UnknownKey("loss_weights.extra".into())
        );
    }

    #[test]
    fn wrong_types_are_named() {
        let text = to_yaml(&sample()).replace(&format!("width: {}", sample().width), "width: wide");
        assert_eq!(from_yaml(&text).unwrap_err().key(), Some("width"));
        assert_eq!(from_yaml("- 1\n- 2\n").unwrap_err(), ConfigError::NotAMapping);
        assert!(matches!(from_yaml("a: [").unwrap_err(), ConfigError::Syntax(_)));
    }
}
