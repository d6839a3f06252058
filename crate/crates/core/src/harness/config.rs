//! Run configuration, loaded from TOML or JSON.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::env::{EnvConfig, Objective};
use crate::init_phase1::Phase1Config;
use crate::learn::LearnConfig;
use crate::rnf::RnfConfig;
use crate::scenario::{generate_scenario, Scenario, WorldConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Uniform random starting poses instead of clustering.
    NoPhase1,
    /// Plain MAPPO, reset controller disabled.
    NoRnf,
}

impl FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "no_phase1" => Ok(Ablation::NoPhase1),
            "no_rnf" => Ok(Ablation::NoRnf),
            other => Err(Error::Config(format!("unknown ablation `{other}`"))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::None => "none",
            Ablation::NoPhase1 => "no_phase1",
            Ablation::NoRnf => "no_rnf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Scenario file; when absent the scenario is generated from `world`.
    /// Relative paths resolve against the config file's directory.
    pub scenario: Option<PathBuf>,
    pub world: WorldConfig,
    pub objective: Objective,
    pub ablation: Ablation,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub checkpoint_every: usize,
    /// Random deployments averaged into the reference efficiency.
    pub reference_deployments: usize,
    pub channel: ChannelParams,
    pub env: EnvConfig,
    pub phase1: Phase1Config,
    pub learn: LearnConfig,
    pub rnf: RnfConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            world: WorldConfig::default(),
            objective: Objective::Mmf,
            ablation: Ablation::None,
            episodes: 700,
            seeds: vec![0, 1, 2, 3, 4],
            checkpoint_every: 100,
            reference_deployments: 100,
            channel: ChannelParams::default(),
            env: EnvConfig::default(),
            phase1: Phase1Config::default(),
            learn: LearnConfig::default(),
            rnf: RnfConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.reference_deployments == 0 {
            return Err(Error::Config("reference_deployments must be at least 1".into()));
        }
        self.world.validate()?;
        self.channel.validate()?;
        self.env.validate()?;
        self.learn.validate()?;
        self.rnf.validate()?;
        if self.phase1.restarts == 0 || self.phase1.max_iters == 0 {
            return Err(Error::Config("phase1 restarts and max_iters must be positive".into()));
        }
        Ok(())
    }

    /// Environment config with the run-level objective applied.
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            objective: self.objective,
            ..self.env.clone()
        }
    }

    /// Label used in logs and exports.
    pub fn method_name(&self) -> String {
        let mut name = String::from("orchid");
        if self.ablation != Ablation::None {
            name.push('_');
            name.push_str(&self.ablation.to_string());
        }
        if self.objective == Objective::Pf {
            name.push_str("_pf");
        }
        name
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        if let (Some(rel), Some(dir)) = (&cfg.scenario, path.parent()) {
            if rel.is_relative() {
                cfg.scenario = Some(dir.join(rel));
            }
        }
        Ok(cfg)
    }

    /// The scenario named by the config, or one generated from `world`.
    pub fn resolve_scenario(&self) -> Result<Scenario> {
        let scenario = match &self.scenario {
            Some(p) => Scenario::load(p)?,
            None => generate_scenario(&self.world)?,
        };
        if scenario.config.num_uavs == 0 {
            return Err(Error::Config("scenario has no UAVs".into()));
        }
        Ok(scenario)
    }
}
