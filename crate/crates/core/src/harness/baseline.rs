//! Static deployments: UAVs hold their poses at mid-range power.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::log::{seed_dir, write_log, LogRow, RunManifest, LOG_FILE, LOG_SCHEMA_VERSION};
use super::train::{random_feasible_poses, reference_mean_ee, static_episode};
use crate::env::Env;
use crate::rng::{self, derive_seed};
use crate::scenario::{Point3, Scenario};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    /// Fresh uniform random poses every episode.
    StaticRandom,
    /// Clustering poses, never moved.
    StaticKmeans,
}

impl FromStr for BaselineMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static_random" => Ok(Self::StaticRandom),
            "static_kmeans" => Ok(Self::StaticKmeans),
            other => Err(Error::Config(format!("unknown baseline method `{other}`"))),
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StaticRandom => "static_random",
            Self::StaticKmeans => "static_kmeans",
        })
    }
}

/// Poses the baseline holds during `episode` (1-based) of `seed`.
pub fn baseline_poses(method: BaselineMethod, cfg: &RunConfig, scenario: &Scenario, seed: u64, episode: usize) -> Result<Vec<Point3>> {
    let n = scenario.config.num_uavs;
    match method {
        BaselineMethod::StaticRandom => {
            let mut r = rng::stream(seed, "static_random", episode as u64);
            Ok(random_feasible_poses(n, scenario.config.area_side, &cfg.env, &mut r))
        }
        BaselineMethod::StaticKmeans => super::train::initial_poses(
            &RunConfig {
                ablation: super::config::Ablation::None,
                ..cfg.clone()
            },
            scenario,
            seed,
        ),
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub reference_mean_ee: f64,
    /// One log per seed, in seed order.
    pub logs: Vec<Vec<LogRow>>,
}

/// Runs the baseline for every seed in `cfg`, writing a run directory when
/// `out` is given. Produces no checkpoints.
pub fn run_baseline(method: BaselineMethod, cfg: &RunConfig, scenario: &Scenario, out: Option<&Path>) -> Result<BaselineOutcome> {
    cfg.validate()?;
    let env_cfg = cfg.env_config();
    let reference = reference_mean_ee(scenario, &cfg.channel, &env_cfg, cfg.reference_deployments)?;
    let mut env = Env::new(scenario, cfg.channel.clone(), env_cfg)?;
    let mut logs = Vec::with_capacity(cfg.seeds.len());
    let mut first_poses = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut rows = Vec::with_capacity(cfg.episodes);
        let kmeans = match method {
            BaselineMethod::StaticKmeans => Some(baseline_poses(method, cfg, scenario, seed, 1)?),
            BaselineMethod::StaticRandom => None,
        };
        for e in 1..=cfg.episodes {
            let poses = match &kmeans {
                Some(p) => p.clone(),
                None => baseline_poses(method, cfg, scenario, seed, e)?,
            };
            if e == 1 {
                first_poses.push(poses.clone());
            }
            let acc = static_episode(&mut env, &poses, derive_seed(seed, "episode", e as u64))?;
            let m = acc.finish(reference, false)?;
            rows.push(LogRow::from_metrics(seed, e, &m, (0.0, 0.0), None));
        }
        if let Some(dir) = out {
            let d = seed_dir(dir, seed);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            write_log(&d.join(LOG_FILE), &rows)?;
        }
        logs.push(rows);
    }
    if let Some(dir) = out {
        RunManifest {
            schema_version: LOG_SCHEMA_VERSION,
            method: method.to_string(),
            seeds: cfg.seeds.clone(),
            episodes: cfg.episodes,
            reference_mean_ee: reference,
            initial_poses: first_poses,
            rnf_trigger_episodes: vec![None; cfg.seeds.len()],
            config: serde_json::to_value(cfg)?,
        }
        .save(dir)?;
    }
    Ok(BaselineOutcome {
        reference_mean_ee: reference,
        logs,
    })
}
