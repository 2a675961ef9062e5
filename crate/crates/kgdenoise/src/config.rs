//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment line. Settings are applied to
//! the defaults in file order, then `--set` flags on top.

use std::path::Path;

use kgdenoise_core::harness::{ConfigError, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunConfigError {
    #[error("{origin}: {source}")]
    Io {
        origin: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}: expected key=value, found {text:?}")]
    Syntax { origin: String, line: usize, text: String },
    #[error("{origin}: {source}")]
    Key {
        origin: String,
        #[source]
        source: ConfigError,
    },
}

/// `(line, key, value)` triples of a config file.
pub fn parse_settings(src: &str, origin: &str) -> Result<Vec<(usize, String, String)>, RunConfigError> {
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = split_setting(line).ok_or_else(|| RunConfigError::Syntax {
            origin: origin.to_string(),
            line: i + 1,
            text: line.to_string(),
        })?;
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn split_setting(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then_some((k, v.trim()))
}

/// Defaults, then `file`, then each `key=value` in `flags`.
pub fn build_config(file: Option<&Path>, flags: &[String]) -> Result<TrainConfig, RunConfigError> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = file {
        apply_file(&mut cfg, path)?;
    }
    apply_flags(&mut cfg, flags)?;
    Ok(cfg)
}

pub fn apply_file(cfg: &mut TrainConfig, path: &Path) -> Result<(), RunConfigError> {
    let origin = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|source| RunConfigError::Io { origin: origin.clone(), source })?;
    for (line, k, v) in parse_settings(&src, &origin)? {
        cfg.set(&k, &v).map_err(|source| RunConfigError::Key { origin: format!("{origin}:{line}"), source })?;
    }
    Ok(())
}

pub fn apply_flags(cfg: &mut TrainConfig, flags: &[String]) -> Result<(), RunConfigError> {
    for f in flags {
        let (k, v) = split_setting(f).ok_or_else(|| RunConfigError::Syntax {
            origin: "--set".into(),
            line: 0,
            text: f.clone(),
        })?;
        cfg.set(k, v).map_err(|source| RunConfigError::Key { origin: "--set".into(), source })?;
    }
    Ok(())
}

/// Config file text that reproduces `cfg`.
pub fn render(cfg: &TrainConfig) -> String {
    cfg.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
