//! Application settings file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use qcseg::pipeline::ScenarioConfig;
use qcseg::volume::Task;
use qcseg::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PORT: u16 = 8321;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Where generated cohorts live. Relative paths resolve against the
    /// directory holding the config file.
    pub data_root: PathBuf,
    pub runs_root: PathBuf,
    pub task: Task,
    /// Named scenario configurations for `run-scenario --preset`.
    pub presets: BTreeMap<String, ScenarioConfig>,
    pub port: u16,
    /// When set, replaces the seed of every stage config; `--seed` still
    /// takes precedence.
    pub seed: Option<u64>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            runs_root: PathBuf::from("runs"),
            task: Task::Sax,
            presets: BTreeMap::new(),
            port: DEFAULT_PORT,
            seed: None,
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<()> {
        if self.port < 1024 {
            return Err(Error::invalid("port", format!("{} is outside 1024..=65535", self.port)));
        }
        for (name, p) in [("data_root", &self.data_root), ("runs_root", &self.runs_root)] {
            if p.as_os_str().is_empty() {
                return Err(Error::invalid(name, "must not be empty"));
            }
        }
        for (name, preset) in &self.presets {
            preset.validate().map_err(|e| Error::invalid(format!("presets.{name}"), e.to_string()))?;
        }
        Ok(())
    }

    /// Copy with relative paths made relative to `base`.
    pub fn resolved(&self, base: &Path) -> AppConfig {
        let fix = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        AppConfig { data_root: fix(&self.data_root), runs_root: fix(&self.runs_root), ..self.clone() }
    }
}

/// Parse settings text. Syntax errors carry the line and column.
pub fn parse_config(text: &str, origin: &str) -> Result<AppConfig> {
    let cfg: AppConfig = serde_json::from_str(text)
        .map_err(|e| Error::format(origin, format!("line {}, column {}: {e}", e.line(), e.column())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Load a settings file. Paths are kept as written; see [`AppConfig::resolved`].
pub fn load_config(path: &Path) -> Result<AppConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

pub fn save_config(cfg: &AppConfig, path: &Path) -> Result<()> {
    cfg.validate()?;
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a JSON stage config for a CLI verb, with line context on errors.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), format!("line {}, column {}: {e}", e.line(), e.column())))
}
