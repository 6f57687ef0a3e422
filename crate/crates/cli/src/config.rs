//! Experiment files.
//!
//! ```toml
//! horizon = 50.0
//! replicas = 8
//! seed = 7
//! start = [1, 1]            # coin and grem models; defaults to all ones
//! theta_r = 2.0             # also report Θ_k(theta_r) per replica
//!
//! env_file = "env.toml"     # or an inline [env] table, or env_dump
//!
//! [grem]                    # grem-experiment only
//! n = 100
//! alphas = [0.5, 0.8]
//!
//! [output]
//! dir = "out"               # replica-NNNN.csv and summary.ndjson
//! ```

use std::path::{Path, PathBuf};

use ktrap::grem_env::{EnvDump, GremOptions, LeafStorage, TailSpec, DEFAULT_MEMORY_CAP};
use ktrap::tree_env::EnvConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Coin,
    Mark,
    Kprocess,
    Grem,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Coin => "coin",
            Model::Mark => "mark",
            Model::Kprocess => "kprocess",
            Model::Grem => "grem",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DumpFormat {
    Bin,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GremConfig {
    pub n: u64,
    pub alphas: Vec<f64>,
    /// Leaves kept per parent when the leaf level is too large to store.
    #[serde(default)]
    pub keep: Option<u64>,
    #[serde(default)]
    pub memory_cap: Option<u64>,
    /// Write each replica's environment next to its trajectory.
    #[serde(default)]
    pub dump: Option<DumpFormat>,
}

impl GremConfig {
    pub fn specs(&self) -> Result<Vec<TailSpec>, CliError> {
        let specs = self
            .alphas
            .iter()
            .map(|&a| TailSpec::pareto(a))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::config)?;
        ktrap::grem_env::validate_specs(&specs).map_err(CliError::config)?;
        Ok(specs)
    }

    pub fn options(&self) -> GremOptions {
        GremOptions {
            storage: self.keep.map_or(LeafStorage::Auto, LeafStorage::Top),
            memory_cap: self.memory_cap.unwrap_or(DEFAULT_MEMORY_CAP),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KprocessConfig {
    /// Target for the fraction of clock mass lost to truncation, used
    /// when the environment gives no cutoffs.
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_leaves")]
    pub max_leaves: u64,
}

fn default_eps() -> f64 {
    1e-3
}

fn default_max_leaves() -> u64 {
    1 << 20
}

impl Default for KprocessConfig {
    fn default() -> Self {
        KprocessConfig {
            eps: default_eps(),
            max_leaves: default_max_leaves(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Without a directory the summary goes to stdout and no trajectory
    /// files are written.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub trajectories: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            trajectories: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: Option<Model>,
    pub horizon: f64,
    pub replicas: u64,
    pub seed: u64,
    #[serde(default)]
    pub start: Option<Vec<u64>>,
    #[serde(default)]
    pub theta_r: Option<f64>,
    #[serde(default)]
    pub env: Option<EnvConfig>,
    #[serde(default)]
    pub env_file: Option<PathBuf>,
    #[serde(default)]
    pub env_dump: Option<PathBuf>,
    #[serde(default)]
    pub grem: Option<GremConfig>,
    #[serde(default)]
    pub kprocess: KprocessConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub workers: Option<usize>,
}

/// Where the trap depths come from.
#[derive(Debug, Clone)]
pub enum EnvSource {
    Config(EnvConfig),
    Dump(EnvDump),
    Grem(GremConfig),
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn read_env_config(path: &Path) -> Result<EnvConfig, CliError> {
    EnvConfig::parse(&read_text(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Binary dumps are recognised by their magic, anything else is CSV.
pub fn read_dump(path: &Path) -> Result<EnvDump, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if bytes.starts_with(ktrap::grem_env::DUMP_MAGIC) {
        EnvDump::from_bytes(&bytes)
    } else {
        EnvDump::from_csv(&String::from_utf8_lossy(&bytes))
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg = Self::parse(&read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.env_file, &mut cfg.env_dump, &mut cfg.output.dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.replicas < 1 {
            return Err(CliError::Config("replicas must be at least 1".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(CliError::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if let Some(r) = self.theta_r {
            if !(r.is_finite() && r >= 0.0) {
                return Err(CliError::Config(format!("theta_r must be nonnegative, got {r}")));
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if let Some(env) = &self.env {
            env.validate().map_err(CliError::config)?;
        }
        let sources = [
            self.env.is_some(),
            self.env_file.is_some(),
            self.env_dump.is_some(),
            self.grem.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() > 1 {
            return Err(CliError::Config(
                "give exactly one of env, env_file, env_dump and [grem]".into(),
            ));
        }
        Ok(())
    }

    /// The model the subcommand runs; a `model` key must agree with it.
    pub fn check_model(&self, model: Model) -> Result<(), CliError> {
        match self.model {
            Some(m) if m != model => Err(CliError::Config(format!(
                "config is for the {} model, the subcommand runs {}",
                m.name(),
                model.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn env_source(&self) -> Result<EnvSource, CliError> {
        if let Some(g) = &self.grem {
            return Ok(EnvSource::Grem(g.clone()));
        }
        if let Some(e) = &self.env {
            return Ok(EnvSource::Config(e.clone()));
        }
        if let Some(p) = &self.env_file {
            return Ok(EnvSource::Config(read_env_config(p)?));
        }
        if let Some(p) = &self.env_dump {
            return Ok(EnvSource::Dump(read_dump(p)?));
        }
        Err(CliError::Config(
            "no environment: give env, env_file, env_dump or [grem]".into(),
        ))
    }
}
