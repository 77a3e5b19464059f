//! Run configuration: a TOML file supplying the global seed, default paths,
//! backend commands, and DSP/pairing defaults that individual flags override.
//!
//! Schema:
//!
//! ```toml
//! seed = 42                         # mandatory
//!
//! [paths]                           # all optional; must exist if given
//! corpus = "data/train.jsonl"
//! embeddings = "out/embeddings.jsonl"
//! output_dir = "out"
//!
//! [backends]
//! vc_command = "python3 vc_infer.py"
//! asr_command = "asr-decode --model base2"
//!
//! [dsp]
//! sample_rate = 16000
//!
//! [pairing]
//! strategy = "top"
//! k = 2
//! ```
//!
//! The environment variables `VOXAUG_VC_COMMAND` and `VOXAUG_ASR_COMMAND`
//! override the configured backend commands; explicit flags override both.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use voxaug_core::pairing::Strategy;

/// Parsed and validated run configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub backends: Backends,
    #[serde(default)]
    pub dsp: Dsp,
    #[serde(default)]
    pub pairing: Pairing,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    pub vc_command: Option<String>,
    pub asr_command: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dsp {
    pub sample_rate: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pairing {
    pub strategy: Option<String>,
    pub k: Option<usize>,
}

/// Errors raised while loading a config file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{path}: configured {key} \"{value}\" does not exist")]
    MissingPath {
        path: PathBuf,
        key: &'static str,
        value: PathBuf,
    },
    #[error("{path}: pairing.strategy: {reason}")]
    BadStrategy { path: PathBuf, reason: String },
}

impl RunConfig {
    /// Loads and validates a config file: the seed must be present, every
    /// configured path must exist, and the pairing strategy must parse.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;

        let checks: [(&'static str, &Option<PathBuf>); 3] = [
            ("paths.corpus", &config.paths.corpus),
            ("paths.embeddings", &config.paths.embeddings),
            ("paths.output_dir", &config.paths.output_dir),
        ];
        for (key, value) in checks {
            if let Some(value) = value {
                if !value.exists() {
                    return Err(ConfigError::MissingPath {
                        path: path.to_path_buf(),
                        key,
                        value: value.clone(),
                    });
                }
            }
        }
        if let Some(strategy) = &config.pairing.strategy {
            strategy.parse::<Strategy>().map_err(|reason| ConfigError::BadStrategy {
                path: path.to_path_buf(),
                reason,
            })?;
        }
        Ok(config)
    }

    pub fn strategy(&self) -> Option<Strategy> {
        self.pairing.strategy.as_deref().map(|s| s.parse().expect("validated at load"))
    }
}
