//! Service configuration. Layers apply in order defaults, file, environment,
//! flags; later layers win.

use std::path::{Path, PathBuf};

use clap::Args;
use kwexpert_core::inference::Strategy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "KWEXPERT_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("environment variable {var}: {message}")]
    Env { var: String, message: String },
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub corpus_dir: Option<PathBuf>,
    /// Saved index snapshot, loaded instead of `corpus_dir` when present.
    pub index_path: Option<PathBuf>,
    pub rules_file: Option<PathBuf>,
    pub cache_path: Option<PathBuf>,
    pub cache_enabled: bool,
    pub cache_capacity: usize,
    pub theta: f64,
    pub decay: f64,
    pub tau: f64,
    pub max_depth: usize,
    pub strategy: Strategy,
    pub top_k: usize,
    pub window: usize,
    pub min_count: u32,
    pub history_len: usize,
    pub session_idle_secs: u64,
    pub host: String,
    pub port: u16,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            corpus_dir: None,
            index_path: None,
            rules_file: None,
            cache_path: None,
            cache_enabled: true,
            cache_capacity: kwexpert_core::compression::DEFAULT_CAPACITY,
            theta: kwexpert_core::query::DEFAULT_THETA,
            decay: kwexpert_core::query::DEFAULT_DECAY,
            tau: kwexpert_core::inference::DEFAULT_TAU,
            max_depth: kwexpert_core::inference::DEFAULT_MAX_DEPTH,
            strategy: Strategy::RuleOrder,
            top_k: 10,
            window: 4,
            min_count: 1,
            history_len: kwexpert_core::query::DEFAULT_HISTORY_LEN,
            session_idle_secs: 3600,
            host: "127.0.0.1".to_string(),
            port: 8080,
        }
    }
}

/// One configuration layer: every field optional.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    #[arg(long, global = true)]
    pub corpus_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub index_path: Option<PathBuf>,
    #[arg(long, global = true)]
    pub rules_file: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache_path: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache_enabled: Option<bool>,
    #[arg(long, global = true)]
    pub cache_capacity: Option<usize>,
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    #[arg(long, global = true)]
    pub decay: Option<f64>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub max_depth: Option<usize>,
    #[arg(long, global = true)]
    pub strategy: Option<Strategy>,
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub min_count: Option<u32>,
    #[arg(long, global = true)]
    pub history_len: Option<usize>,
    #[arg(long, global = true)]
    pub session_idle_secs: Option<u64>,
    #[arg(long, global = true)]
    pub host: Option<String>,
    #[arg(long, global = true)]
    pub port: Option<u16>,
}

macro_rules! each_field {
    ($m:ident) => {
        $m!(corpus_dir, opt);
        $m!(index_path, opt);
        $m!(rules_file, opt);
        $m!(cache_path, opt);
        $m!(cache_enabled, val);
        $m!(cache_capacity, val);
        $m!(theta, val);
        $m!(decay, val);
        $m!(tau, val);
        $m!(max_depth, val);
        $m!(strategy, val);
        $m!(top_k, val);
        $m!(window, val);
        $m!(min_count, val);
        $m!(history_len, val);
        $m!(session_idle_secs, val);
        $m!(host, val);
        $m!(port, val);
    };
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads `KWEXPERT_<FIELD>` variables from `vars`.
    pub fn from_env(vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut layer = ConfigLayer::default();
        for (name, value) in vars {
            let Some(field) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let field = field.to_ascii_lowercase();
            let bad = |message: String| ConfigError::Env {
                var: name.clone(),
                message,
            };
            macro_rules! set {
                ($f:ident, $kind:ident) => {
                    if field == stringify!($f) {
                        layer.$f = Some(value.parse().map_err(|e| bad(format!("{e}")))?);
                        continue;
                    }
                };
            }
            if field == "config" {
                continue;
            }
            each_field!(set);
            return Err(bad("unknown setting".to_string()));
        }
        Ok(layer)
    }
}

impl Config {
    pub fn apply(&mut self, layer: &ConfigLayer) {
        macro_rules! merge {
            ($f:ident, opt) => {
                if let Some(v) = &layer.$f {
                    self.$f = Some(v.clone());
                }
            };
            ($f:ident, val) => {
                if let Some(v) = &layer.$f {
                    self.$f = v.clone();
                }
            };
        }
        each_field!(merge);
    }

    /// Defaults, then `file`, then environment, then `flags`.
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: &ConfigLayer,
    ) -> Result<Config, ConfigError> {
        let env: Vec<(String, String)> = env.into_iter().collect();
        let env_file = env
            .iter()
            .find(|(k, _)| k == "KWEXPERT_CONFIG")
            .map(|(_, v)| PathBuf::from(v));
        let mut config = Config::default();
        if let Some(path) = file.map(Path::to_path_buf).or(env_file) {
            config.apply(&ConfigLayer::from_file(&path)?);
        }
        config.apply(&ConfigLayer::from_env(env)?);
        config.apply(flags);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [("theta", self.theta), ("decay", self.decay), ("tau", self.tau)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Invalid {
                    field,
                    message: format!("{value} is outside [0, 1]"),
                });
            }
        }
        for (field, value) in [
            ("max_depth", self.max_depth),
            ("top_k", self.top_k),
            ("window", self.window),
            ("cache_capacity", self.cache_capacity),
            ("history_len", self.history_len),
        ] {
            if value == 0 {
                return Err(ConfigError::Invalid {
                    field,
                    message: "must be at least 1".to_string(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_are_valid() {
        let c = Config::resolve(None, Vec::new(), &ConfigLayer::default()).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!((c.theta, c.tau, c.max_depth, c.top_k), (0.2, 0.15, 8, 10));
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("kwexpert.toml");
        std::fs::write(&file, "tau = 0.3\ntheta = 0.4\ntop_k = 3\nstrategy = \"specificity\"\n").unwrap();
        let flags = ConfigLayer {
            tau: Some(0.5),
            ..Default::default()
        };
        let c = Config::resolve(
            Some(&file),
            env(&[("KWEXPERT_TAU", "0.9"), ("KWEXPERT_THETA", "0.6"), ("HOME", "/x")]),
            &flags,
        )
        .unwrap();
        assert_eq!(c.tau, 0.5);
        assert_eq!(c.theta, 0.6);
        assert_eq!(c.top_k, 3);
        assert_eq!(c.strategy, Strategy::Specificity);
    }

    #[test]
    fn config_file_from_env() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, "port = 9000\n").unwrap();
        let c = Config::resolve(
            None,
            env(&[("KWEXPERT_CONFIG", file.to_str().unwrap())]),
            &ConfigLayer::default(),
        )
        .unwrap();
        assert_eq!(c.port, 9000);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = ConfigLayer {
            theta: Some(1.5),
            ..Default::default()
        };
        assert!(matches!(
            Config::resolve(None, Vec::new(), &bad),
            Err(ConfigError::Invalid { field: "theta", .. })
        ));
        let zero = ConfigLayer {
            max_depth: Some(0),
            ..Default::default()
        };
        assert!(Config::resolve(None, Vec::new(), &zero).is_err());
        assert!(matches!(
            Config::resolve(None, env(&[("KWEXPERT_TOP_K", "many")]), &ConfigLayer::default()),
            Err(ConfigError::Env { .. })
        ));
        assert!(Config::resolve(None, env(&[("KWEXPERT_COLOR", "red")]), &ConfigLayer::default()).is_err());
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, "tua = 0.3\n").unwrap();
        assert!(matches!(
            Config::resolve(Some(&file), Vec::new(), &ConfigLayer::default()),
            Err(ConfigError::Parse { .. })
        ));
    }
}
