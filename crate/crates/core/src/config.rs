//! Run configuration file (JSON). Unknown keys are rejected; every omitted
//! key takes its documented default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::model::{RewardScript, DEFAULT_EMBED_DIM};
use crate::pipeline::PipelineConfig;
use crate::qsc::QscConfig;

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

fn default_dim() -> usize {
    DEFAULT_EMBED_DIM
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

/// Where retrieval is served from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KbBackend {
    /// A knowledge-base directory loaded in-process.
    Embedded { base: PathBuf },
    /// A running knowledge-base server.
    Remote {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_ms: u64,
    },
    /// A seeded synthetic corpus built at startup.
    Synthetic { domains: Vec<String>, per_domain: usize },
}

/// Where the generator, reward model, embedder and trainer live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelBackend {
    Simulated {
        #[serde(default = "default_dim")]
        dim: usize,
        /// Inline reward script.
        #[serde(default)]
        reward_script: Option<RewardScript>,
        /// Reward script file, relative to the config file.
        #[serde(default)]
        reward_script_path: Option<PathBuf>,
    },
    Remote {
        url: String,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_timeout")]
        timeout_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    pub kb: KbBackend,
    pub model: ModelBackend,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        Self {
            kb: KbBackend::Synthetic {
                domains: vec!["code".into(), "math".into(), "medical".into()],
                per_domain: 64,
            },
            model: ModelBackend::Simulated {
                dim: DEFAULT_EMBED_DIM,
                reward_script: None,
                reward_script_path: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub qsc: QscConfig,
    pub cost: CostParams,
    pub backends: BackendsConfig,
    /// Seeds the synthetic corpus generator only.
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            qsc: QscConfig::default(),
            cost: CostParams::default(),
            backends: BackendsConfig::default(),
            seed: 0,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative paths inside are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        let root = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = root.join(&*p);
            }
        };
        if let KbBackend::Embedded { base } = &mut cfg.backends.kb {
            resolve(base);
        }
        if let ModelBackend::Simulated {
            reward_script_path: Some(p),
            ..
        } = &mut cfg.backends.model
        {
            resolve(p);
        }
        if let Some(p) = &mut cfg.out_dir {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.qsc.validate()?;
        self.cost.validate()?;
        match &self.backends.model {
            ModelBackend::Simulated {
                dim,
                reward_script,
                reward_script_path,
            } => {
                if *dim == 0 {
                    return Err(Error::Config("embedding dim must be positive".into()));
                }
                if reward_script.is_some() && reward_script_path.is_some() {
                    return Err(Error::Config(
                        "give either reward_script or reward_script_path, not both".into(),
                    ));
                }
            }
            ModelBackend::Remote { url, dim, .. } => {
                if url.is_empty() || *dim == 0 {
                    return Err(Error::Config("remote model needs a url and a positive dim".into()));
                }
            }
        }
        match &self.backends.kb {
            KbBackend::Synthetic { domains, per_domain } => {
                if domains.is_empty() || *per_domain == 0 || domains.iter().any(String::is_empty) {
                    return Err(Error::Config("synthetic kb needs non-empty domains and per_domain ≥ 1".into()));
                }
            }
            KbBackend::Remote { url, .. } if url.is_empty() => {
                return Err(Error::Config("remote kb needs a url".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// The simulated reward script, read from disk if configured by path.
    /// Defaults to a constant-zero script.
    pub fn reward_script(&self) -> Result<RewardScript> {
        match &self.backends.model {
            ModelBackend::Simulated {
                reward_script: Some(s), ..
            } => Ok(s.clone()),
            ModelBackend::Simulated {
                reward_script_path: Some(p),
                ..
            } => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
            _ => RewardScript::new(0.0),
        }
    }
}
