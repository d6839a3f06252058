//! Training loop: clustering initialization, episode rollouts, PPO updates,
//! the reset controller, logging and checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{Ablation, RunConfig};
use super::log::{seed_dir, write_log, LogRow, RunManifest, LOG_FILE, LOG_SCHEMA_VERSION};
use crate::env::{ActionVector, EnvConfig, Env, RewardNormalizers, ACTION_DIM, OBS_DIM};
use crate::init_phase1::phase1_poses;
use crate::learn::ppo::AgentTrajectory;
use crate::learn::{Mappo, RolloutBuffer};
use crate::metrics::EpisodeAccumulator;
use crate::rng::{self, derive_seed, Rng};
use crate::rnf::{apply_reset, RnfState};
use crate::scenario::{Point3, Scenario};
use crate::channel::ChannelParams;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Uniform random poses inside the flight box. Pairs closer than the
/// separation distance are redrawn while that stays cheap.
pub fn random_feasible_poses(n: usize, area_side: f64, cfg: &EnvConfig, rng: &mut Rng) -> Vec<Point3> {
    let mut poses: Vec<Point3> = Vec::with_capacity(n);
    let draw = |rng: &mut Rng| -> Point3 {
        [
            rng.random_range(0.0..=area_side),
            rng.random_range(0.0..=area_side),
            rng.random_range(cfg.h_min..=cfg.h_max),
        ]
    };
    for _ in 0..n {
        let mut p = draw(rng);
        for _ in 0..100 {
            if poses.iter().all(|q| (0..3).map(|i| (q[i] - p[i]).powi(2)).sum::<f64>().sqrt() >= cfg.d_min) {
                break;
            }
            p = draw(rng);
        }
        poses.push(p);
    }
    poses
}

/// Holds `poses` for a full episode at mid-range power.
pub fn static_episode(env: &mut Env, poses: &[Point3], episode_seed: u64) -> Result<EpisodeAccumulator> {
    env.reset(poses, episode_seed)?;
    let hold = vec![ActionVector::ZERO; poses.len()];
    let mut acc = EpisodeAccumulator::default();
    for _ in 0..env.config().horizon_steps {
        let out = env.step(&hold)?;
        acc.push(out.info.ee, out.info.coverage_fraction, out.info.jfi_load, out.info.jfi_rate, &out.rewards);
    }
    Ok(acc)
}

/// Mean efficiency of static random deployments on this scenario: the NEE
/// denominator. Keyed by the scenario seed so every run on a scenario
/// shares it.
pub fn reference_mean_ee(scenario: &Scenario, channel: &ChannelParams, env_cfg: &EnvConfig, deployments: usize) -> Result<f64> {
    let mut env = Env::new(scenario, channel.clone(), env_cfg.clone())?;
    let mut r = rng::stream(scenario.seed, "reference", 0);
    let mut total = 0.0;
    for i in 0..deployments {
        let poses = random_feasible_poses(scenario.config.num_uavs, scenario.config.area_side, env_cfg, &mut r);
        let acc = static_episode(&mut env, &poses, derive_seed(scenario.seed, "reference_episode", i as u64))?;
        total += crate::metrics::mean(&acc.ee);
    }
    let ee = total / deployments as f64;
    if !(ee > 0.0 && ee.is_finite()) {
        return Err(Error::Domain(format!("reference efficiency is {ee}; no random deployment covers anyone")));
    }
    Ok(ee)
}

/// Starting poses for a seed: clustering, or random under `no_phase1`.
pub fn initial_poses(cfg: &RunConfig, scenario: &Scenario, seed: u64) -> Result<Vec<Point3>> {
    let n = scenario.config.num_uavs;
    match cfg.ablation {
        Ablation::NoPhase1 => {
            let mut r = rng::stream(seed, "random_poses", 0);
            Ok(random_feasible_poses(n, scenario.config.area_side, &cfg.env, &mut r))
        }
        _ => {
            let mut r = rng::stream(seed, "phase1", 0);
            let mut phase1 = cfg.phase1.clone();
            phase1.init_altitude = phase1.init_altitude.clamp(cfg.env.h_min, cfg.env.h_max);
            Ok(phase1_poses(&scenario.users, n, scenario.config.gbs_position, &phase1, &mut r)?.0)
        }
    }
}

/// Everything needed to continue a seed's run bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub method: String,
    pub seed: u64,
    pub episodes_done: usize,
    pub config: RunConfig,
    pub scenario_seed: u64,
    pub num_users: usize,
    pub initial_poses: Vec<Point3>,
    pub reference_mean_ee: f64,
    pub learner: Mappo,
    pub rnf: RnfState,
    pub normalizers: RewardNormalizers,
    pub rng: Rng,
    pub buffer: RolloutBuffer,
    pub rows: Vec<LogRow>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(self)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointMismatch(format!("unsupported checkpoint version {}", ck.version)));
        }
        Ok(ck)
    }

    /// Rejects a scenario whose dimensions differ from the trained one.
    pub fn check_scenario(&self, scenario: &Scenario) -> Result<()> {
        let n = self.learner.num_agents;
        let env_cfg = self.config.env_config();
        let expect = [
            ("UAV count", n, scenario.config.num_uavs),
            ("initial pose count", n, self.initial_poses.len()),
            ("actor input", OBS_DIM + n, self.learner.actor.input_dim()),
            ("actor output", ACTION_DIM, self.learner.actor.action_dim()),
            ("critic input", env_cfg.global_state_dim(scenario.config.num_uavs) + n, self.learner.critic.input_dim()),
        ];
        for (what, want, got) in expect {
            if want != got {
                return Err(Error::CheckpointMismatch(format!("{what}: expected {want}, got {got}")));
            }
        }
        Ok(())
    }
}

/// Where checkpoints go; `None` keeps a run in memory.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub out_dir: Option<PathBuf>,
}

/// A single seed's run in progress.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub state: Checkpoint,
    env: Env,
}

impl SeedRun {
    pub fn new(cfg: &RunConfig, scenario: &Scenario, seed: u64, reference_mean_ee: f64) -> Result<Self> {
        cfg.validate()?;
        let env_cfg = cfg.env_config();
        let env = Env::new(scenario, cfg.channel.clone(), env_cfg.clone())?;
        let n = scenario.config.num_uavs;
        let mut init_rng = rng::stream(seed, "init", 0);
        let learner = Mappo::new(OBS_DIM, env_cfg.global_state_dim(n), ACTION_DIM, n, &cfg.learn, &mut init_rng);
        let state = Checkpoint {
            version: CHECKPOINT_VERSION,
            method: cfg.method_name(),
            seed,
            episodes_done: 0,
            config: cfg.clone(),
            scenario_seed: scenario.seed,
            num_users: scenario.num_users(),
            initial_poses: initial_poses(cfg, scenario, seed)?,
            reference_mean_ee,
            learner,
            rnf: RnfState::new(cfg.rnf.clone())?,
            normalizers: RewardNormalizers::default(),
            rng: rng::stream(seed, "policy", 0),
            buffer: RolloutBuffer::default(),
            rows: Vec::new(),
        };
        Ok(Self { state, env })
    }

    pub fn from_checkpoint(ck: Checkpoint, scenario: &Scenario) -> Result<Self> {
        ck.check_scenario(scenario)?;
        if ck.scenario_seed != scenario.seed || ck.num_users != scenario.num_users() {
            return Err(Error::CheckpointMismatch("checkpoint was trained on a different scenario".into()));
        }
        let mut env = Env::new(scenario, ck.config.channel.clone(), ck.config.env_config())?;
        env.set_normalizers(ck.normalizers);
        Ok(Self { state: ck, env })
    }

    pub fn finished(&self) -> bool {
        self.state.episodes_done >= self.state.config.episodes
    }

    /// Runs one episode, updates, and returns its log row plus whether the
    /// reset controller fired.
    pub fn run_episode(&mut self) -> Result<(LogRow, bool)> {
        let s = &mut self.state;
        let cfg = &s.config;
        let e = s.episodes_done + 1;
        let n = s.learner.num_agents;
        let mut obs_gs = self.env.reset(&s.initial_poses, derive_seed(s.seed, "episode", e as u64))?;
        let mut trajs = vec![AgentTrajectory::default(); n];
        let mut acc = EpisodeAccumulator::default();
        loop {
            let (obs, gs) = &obs_gs;
            let actor_inputs: Vec<Vec<f64>> = (0..n).map(|k| s.learner.with_one_hot(&obs[k].0, k)).collect();
            let critic_inputs: Vec<Vec<f64>> = (0..n).map(|k| s.learner.with_one_hot(&gs.0, k)).collect();
            let sampled = s.learner.act(&actor_inputs, &mut s.rng)?;
            let values = s.learner.values(&critic_inputs)?;
            let actions: Vec<ActionVector> = sampled
                .iter()
                .map(|a| {
                    let mut v = [0.0; ACTION_DIM];
                    v.copy_from_slice(a.action.as_slice().expect("contiguous action"));
                    ActionVector(v)
                })
                .collect();
            let out = self.env.step(&actions)?;
            if out.rewards.iter().any(|r| !r.is_finite()) || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("reward or value at episode {e}, step {}", self.env.state().t)));
            }
            for (k, t) in trajs.iter_mut().enumerate() {
                t.actor_inputs.push(actor_inputs[k].clone());
                t.critic_inputs.push(critic_inputs[k].clone());
                t.pre_squash.push(sampled[k].pre_squash.to_vec());
                t.log_probs.push(sampled[k].log_prob);
                t.values.push(values[k]);
                t.rewards.push(out.rewards[k]);
            }
            acc.push(out.info.ee, out.info.coverage_fraction, out.info.jfi_load, out.info.jfi_rate, &out.rewards);
            if out.done {
                if cfg.learn.bootstrap_horizon {
                    let last: Vec<Vec<f64>> = (0..n).map(|k| s.learner.with_one_hot(&out.global_state.0, k)).collect();
                    for (t, v) in trajs.iter_mut().zip(s.learner.values(&last)?) {
                        t.bootstrap_value = v;
                    }
                }
                break;
            }
            obs_gs = (out.observations, out.global_state);
        }
        s.normalizers = self.env.normalizers();
        s.buffer.add_episode(trajs, cfg.learn.gamma, cfg.learn.gae_lambda)?;
        if s.buffer.episodes >= cfg.learn.episodes_per_update {
            s.learner.update(&mut s.buffer, &cfg.learn, &mut s.rng)?;
            s.buffer.clear();
        }

        let jfi_rate = crate::metrics::mean(&acc.jfi_rate);
        let mut fired = false;
        if cfg.ablation != Ablation::NoRnf {
            s.rnf.update_window(jfi_rate)?;
            if s.rnf.check_trigger(e) {
                apply_reset(&mut s.learner.actor_opt, &mut s.learner.critic_opt, s.rnf.config.kappa);
                fired = true;
            }
        }
        let metrics = acc.finish(s.reference_mean_ee, s.rnf.triggered)?;
        let row = LogRow::from_metrics(
            s.seed,
            e,
            &metrics,
            (s.learner.actor_opt.learning_rate, s.learner.critic_opt.learning_rate),
            s.rnf.trigger_episode,
        );
        s.rows.push(row);
        s.episodes_done = e;
        Ok((row, fired))
    }

    /// Runs to the configured episode count (or `stop_after`), saving
    /// checkpoints when `opts` names a directory.
    pub fn run(&mut self, opts: &TrainOptions, stop_after: Option<usize>) -> Result<()> {
        let dir = opts.out_dir.as_ref().map(|d| seed_dir(d, self.state.seed));
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let limit = stop_after.unwrap_or(usize::MAX).min(self.state.config.episodes);
        while self.state.episodes_done < limit {
            let (row, fired) = match self.run_episode() {
                Ok(x) => x,
                Err(err) => {
                    if let (Error::NonFinite(_), Some(d)) = (&err, &dir) {
                        self.dump_diagnostic(d, &err);
                    }
                    return Err(err);
                }
            };
            if let Some(d) = &dir {
                let e = row.episode;
                let every = self.state.config.checkpoint_every;
                if every > 0 && e % every == 0 {
                    self.state.save(&d.join("checkpoint_latest.json"))?;
                }
                if fired {
                    self.state.save(&d.join("checkpoint_rnf.json"))?;
                }
                if e == self.state.config.episodes {
                    self.state.save(&d.join("checkpoint_final.json"))?;
                }
                if (every > 0 && e % every == 0) || fired || e == self.state.config.episodes {
                    write_log(&d.join(LOG_FILE), &self.state.rows)?;
                }
            }
        }
        if let Some(d) = &dir {
            write_log(&d.join(LOG_FILE), &self.state.rows)?;
        }
        Ok(())
    }

    fn dump_diagnostic(&self, dir: &Path, err: &Error) {
        let diag = serde_json::json!({
            "error": err.to_string(),
            "seed": self.state.seed,
            "episodes_done": self.state.episodes_done,
            "actor_finite": crate::learn::mlp::Parameters::all_finite(&self.state.learner.actor),
            "critic_finite": crate::learn::mlp::Parameters::all_finite(&self.state.learner.critic),
            "actor_lr": self.state.learner.actor_opt.learning_rate,
            "critic_lr": self.state.learner.critic_opt.learning_rate,
            "last_row": self.state.rows.last(),
            "fleet": self.env.state(),
        });
        if let Ok(text) = serde_json::to_string_pretty(&diag) {
            let _ = fs::write(dir.join("abort_diagnostic.json"), text);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub method: String,
    pub reference_mean_ee: f64,
    pub runs: Vec<Checkpoint>,
}

/// Trains every configured seed in order. Seeds share nothing but the
/// scenario and the reference efficiency.
pub fn train(cfg: &RunConfig, scenario: &Scenario, opts: &TrainOptions) -> Result<TrainSummary> {
    cfg.validate()?;
    let reference = reference_mean_ee(scenario, &cfg.channel, &cfg.env_config(), cfg.reference_deployments)?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut run = SeedRun::new(cfg, scenario, seed, reference)?;
        run.run(opts, None)?;
        runs.push(run.state);
    }
    if let Some(dir) = &opts.out_dir {
        RunManifest {
            schema_version: LOG_SCHEMA_VERSION,
            method: cfg.method_name(),
            seeds: cfg.seeds.clone(),
            episodes: cfg.episodes,
            reference_mean_ee: reference,
            initial_poses: runs.iter().map(|r| r.initial_poses.clone()).collect(),
            rnf_trigger_episodes: runs.iter().map(|r| r.rnf.trigger_episode).collect(),
            config: serde_json::to_value(cfg)?,
        }
        .save(dir)?;
        let scenario_path = dir.join("scenario.json");
        scenario.save(&scenario_path)?;
    }
    Ok(TrainSummary {
        method: cfg.method_name(),
        reference_mean_ee: reference,
        runs,
    })
}
