//! TOML training configuration.
//!
//! Every field is optional; unset fields take their defaults. Within `[adc]`
//! the defaults follow `mode`, so `mode = "baseline"` alone switches the
//! pruning schedule to start 500 / threshold 0.005.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

pub fn parse_config_str(text: &str) -> Result<TrainConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
        key: String::new(),
        reason: e.to_string(),
    })?;
    let config: TrainConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        Error::Config {
            key: e.path().to_string(),
            reason: e.inner().to_string(),
        }
    })?;
    config.validate().map_err(|e| Error::Config {
        key: String::new(),
        reason: e.to_string(),
    })?;
    Ok(config)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    parse_config_str(&text)
}

/// Full TOML rendering of `config`; parsing it yields `config` again.
pub fn config_to_toml(config: &TrainConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Config {
        key: String::new(),
        reason: e.to_string(),
    })
}
