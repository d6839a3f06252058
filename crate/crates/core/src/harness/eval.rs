//! Deterministic evaluation of a trained checkpoint.

use serde::{Deserialize, Serialize};

use super::train::{reference_mean_ee, Checkpoint};
use crate::env::{ActionVector, Env, ACTION_DIM};
use crate::metrics::{EpisodeAccumulator, EpisodeMetrics, MetricsAggregate};
use crate::rng::derive_seed;
use crate::scenario::Scenario;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub seed: u64,
    pub reference_mean_ee: f64,
    pub aggregate: MetricsAggregate,
    pub episodes: Vec<EpisodeMetrics>,
}

/// Rolls out the mean action `tanh(μ)` from the checkpoint's starting
/// poses for `episodes` episodes.
pub fn evaluate(ck: &Checkpoint, scenario: &Scenario, episodes: usize, eval_seed: u64) -> Result<EvalReport> {
    ck.check_scenario(scenario)?;
    let cfg = &ck.config;
    let env_cfg = cfg.env_config();
    let reference = reference_mean_ee(scenario, &cfg.channel, &env_cfg, cfg.reference_deployments)?;
    let mut env = Env::new(scenario, cfg.channel.clone(), env_cfg)?;
    env.set_normalizers(ck.normalizers);
    let learner = &ck.learner;
    let n = learner.num_agents;
    let mut out = Vec::with_capacity(episodes);
    for e in 1..=episodes {
        let (mut obs, _) = env.reset(&ck.initial_poses, derive_seed(eval_seed, "eval", e as u64))?;
        let mut acc = EpisodeAccumulator::default();
        loop {
            let inputs: Vec<Vec<f64>> = (0..n).map(|k| learner.with_one_hot(&obs[k].0, k)).collect();
            let actions: Vec<ActionVector> = learner
                .act_deterministic(&inputs)?
                .iter()
                .map(|a| {
                    let mut v = [0.0; ACTION_DIM];
                    v.copy_from_slice(a.as_slice().expect("contiguous action"));
                    ActionVector(v)
                })
                .collect();
            let step = env.step(&actions)?;
            acc.push(step.info.ee, step.info.coverage_fraction, step.info.jfi_load, step.info.jfi_rate, &step.rewards);
            if step.done {
                break;
            }
            obs = step.observations;
        }
        out.push(acc.finish(reference, ck.rnf.triggered)?);
    }
    Ok(EvalReport {
        method: ck.method.clone(),
        seed: ck.seed,
        reference_mean_ee: reference,
        aggregate: MetricsAggregate::of(&out),
        episodes: out,
    })
}
