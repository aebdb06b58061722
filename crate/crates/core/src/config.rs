//! `key = value` overrides for [`CycleConfig`].
//!
//! ```text
//! # comments and blank lines are ignored
//! first_size_min = 30
//! alpha = 0.05
//! ```

use thiserror::Error;

use crate::engine::CycleConfig;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
}

pub fn apply_overrides(base: CycleConfig, text: &str) -> Result<CycleConfig, ConfigError> {
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = || ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        let usize_val = || value.parse::<usize>().map_err(|_| bad());
        match key {
            "first_size_min" => cfg.first_size_min = usize_val()?,
            "first_size_max" => cfg.first_size_max = usize_val()?,
            "increment_min" => cfg.increment_min = usize_val()?,
            "increment_max" => cfg.increment_max = usize_val()?,
            "size_cap" => cfg.size_cap = usize_val()?,
            "cycles" => cfg.cycles = usize_val()?,
            "alpha" => cfg.alpha = value.parse().map_err(|_| bad())?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
            "shared_sizes" => cfg.shared_sizes = value.parse().map_err(|_| bad())?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    Ok(cfg)
}
