//! Clipped-surrogate PPO with a shared actor and a centralized critic.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::OptimizerState;
use super::gae::gae;
use super::mlp::Parameters;
use super::policy::{gaussian_entropy, policy_forward, sample_action, ActorParams, CriticParams, NetConfig, SampledAction};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Episodes collected before each update.
    pub episodes_per_update: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Treat the horizon as a time limit and bootstrap from the critic's
    /// value of the last state; otherwise the horizon is terminal.
    pub bootstrap_horizon: bool,
    pub net: NetConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            epochs: 4,
            minibatch: 128,
            episodes_per_update: 8,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            bootstrap_horizon: true,
            net: NetConfig::default(),
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma must lie in [0, 1) and gae_lambda in [0, 1]");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.entropy_coef >= 0.0) {
            return bad("entropy_coef must be non-negative");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.episodes_per_update == 0 {
            return bad("epochs, minibatch and episodes_per_update must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.net.hidden.is_empty() || self.net.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }
}

/// `clip(r, 1 - ε, 1 + ε) · A`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> f64 {
    ratio.clamp(1.0 - clip, 1.0 + clip) * advantage
}

/// Per-sample PPO surrogate `min(r A, clip(r) A)`.
pub fn surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(clipped_objective(ratio, advantage, clip))
}

/// `d surrogate / d r`: `A` while the unclipped branch is active, else zero.
pub fn surrogate_ratio_grad(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let unclipped_active = if advantage >= 0.0 { ratio < 1.0 + clip } else { ratio > 1.0 - clip };
    if unclipped_active {
        advantage
    } else {
        0.0
    }
}

/// One agent's view of an episode, recorded during collection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentTrajectory {
    pub actor_inputs: Vec<Vec<f64>>,
    pub critic_inputs: Vec<Vec<f64>>,
    pub pre_squash: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Value after the last step; zero for a terminal end.
    pub bootstrap_value: f64,
}

impl AgentTrajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Flattened samples ready for minibatching.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub actor_inputs: Vec<Vec<f64>>,
    pub critic_inputs: Vec<Vec<f64>>,
    pub pre_squash: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub episodes: usize,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    /// Adds one episode, bootstrapping each agent from its
    /// `bootstrap_value`.
    pub fn add_episode(&mut self, agents: Vec<AgentTrajectory>, gamma: f64, lambda: f64) -> Result<()> {
        for traj in agents {
            let n = traj.len();
            if traj.values.len() != n
                || traj.log_probs.len() != n
                || traj.actor_inputs.len() != n
                || traj.critic_inputs.len() != n
                || traj.pre_squash.len() != n
            {
                return Err(Error::ShapeMismatch {
                    context: "trajectory fields",
                    expected: n,
                    actual: traj.values.len(),
                });
            }
            let mut values = traj.values;
            values.push(traj.bootstrap_value);
            let (adv, ret) = gae(&traj.rewards, &values, gamma, lambda)?;
            self.actor_inputs.extend(traj.actor_inputs);
            self.critic_inputs.extend(traj.critic_inputs);
            self.pre_squash.extend(traj.pre_squash);
            self.log_probs.extend(traj.log_probs);
            self.advantages.extend(adv);
            self.returns.extend(ret);
        }
        self.episodes += 1;
        Ok(())
    }

    /// Standardizes advantages in place; skipped when their spread is
    /// negligible.
    pub fn normalize_advantages(&mut self) {
        let m = crate::metrics::mean(&self.advantages);
        let n = self.advantages.len() as f64;
        if n < 2.0 {
            return;
        }
        let std = (self.advantages.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt();
        if std < 1e-8 {
            return;
        }
        self.advantages.iter_mut().for_each(|a| *a = (*a - m) / std);
    }

    pub fn batch(&self, idx: &[usize]) -> RolloutBatch {
        let rows = |src: &Vec<Vec<f64>>| {
            let width = src.first().map_or(0, Vec::len);
            let mut out = Array2::zeros((idx.len(), width));
            for (r, &i) in idx.iter().enumerate() {
                out.row_mut(r).assign(&ndarray::ArrayView1::from(&src[i]));
            }
            out
        };
        RolloutBatch {
            actor_inputs: rows(&self.actor_inputs),
            critic_inputs: rows(&self.critic_inputs),
            pre_squash: rows(&self.pre_squash),
            old_log_probs: idx.iter().map(|&i| self.log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub actor_inputs: Array2<f64>,
    pub critic_inputs: Array2<f64>,
    pub pre_squash: Array2<f64>,
    pub old_log_probs: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ActorLossStats {
    pub loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Gaussian part of the log-density of each row of `u`. The squashing
/// correction does not depend on the parameters, so it cancels in the ratio.
fn gaussian_log_probs(u: &Array2<f64>, mean: &Array2<f64>, log_std: &Array1<f64>) -> Array1<f64> {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let inv_std = log_std.mapv(|l| (-l).exp());
    let mut out = Array1::zeros(u.nrows());
    for r in 0..u.nrows() {
        let mut lp = 0.0;
        for c in 0..u.ncols() {
            let z = (u[[r, c]] - mean[[r, c]]) * inv_std[c];
            lp += -0.5 * z * z - log_std[c] - 0.5 * ln_2pi;
        }
        out[r] = lp;
    }
    out
}

fn squash_correction(u: &Array2<f64>) -> Array1<f64> {
    u.map_axis(Axis(1), |row| row.iter().map(|&x| super::policy::log1m_tanh_sq(x)).sum())
}

/// Actor loss `-mean(surrogate) - c_ent · H` and its gradient.
pub fn actor_loss_and_grad(
    actor: &ActorParams,
    batch: &RolloutBatch,
    clip: f64,
    entropy_coef: f64,
) -> Result<(ActorLossStats, ActorParams)> {
    let b = batch.advantages.len();
    if b == 0 {
        return Err(Error::Domain("empty minibatch".into()));
    }
    let (mean, cache) = actor.trunk.forward_cached(batch.actor_inputs.view())?;
    let log_std = &actor.log_std;
    let lp = gaussian_log_probs(&batch.pre_squash, &mean, log_std) - squash_correction(&batch.pre_squash);
    let inv_var = log_std.mapv(|l| (-2.0 * l).exp());

    let mut grad_mean = Array2::zeros(mean.raw_dim());
    let mut grad_log_std = Array1::zeros(log_std.len());
    let mut surrogate_sum = 0.0;
    let mut clipped = 0usize;
    let mut kl = 0.0;
    for r in 0..b {
        let log_ratio = lp[r] - batch.old_log_probs[r];
        let ratio = log_ratio.exp();
        let a = batch.advantages[r];
        surrogate_sum += surrogate(ratio, a, clip);
        if (ratio - 1.0).abs() > clip {
            clipped += 1;
        }
        kl += (ratio - 1.0) - log_ratio;
        // d loss / d log_prob for this sample
        let g = -surrogate_ratio_grad(ratio, a, clip) * ratio / b as f64;
        if g == 0.0 {
            continue;
        }
        for c in 0..mean.ncols() {
            let diff = batch.pre_squash[[r, c]] - mean[[r, c]];
            grad_mean[[r, c]] += g * diff * inv_var[c];
            grad_log_std[c] += g * (diff * diff * inv_var[c] - 1.0);
        }
    }
    let entropy = gaussian_entropy(log_std.view());
    grad_log_std -= entropy_coef;
    let trunk = actor.trunk.backward(&cache, grad_mean);
    let stats = ActorLossStats {
        loss: -surrogate_sum / b as f64 - entropy_coef * entropy,
        entropy,
        clip_fraction: clipped as f64 / b as f64,
        approx_kl: kl / b as f64,
    };
    Ok((stats, ActorParams { trunk, log_std: grad_log_std }))
}

/// Critic loss `mean((V - G)²)` and its gradient.
pub fn critic_loss_and_grad(critic: &CriticParams, states: ArrayView2<f64>, returns: &Array1<f64>) -> Result<(f64, CriticParams)> {
    let b = returns.len();
    if b == 0 || states.nrows() != b {
        return Err(Error::ShapeMismatch {
            context: "critic batch",
            expected: b,
            actual: states.nrows(),
        });
    }
    let (v, cache) = critic.net.forward_cached(states)?;
    let resid = &v.column(0) - returns;
    let loss = resid.mapv(|x| x * x).sum() / b as f64;
    let grad_out = (resid * (2.0 / b as f64)).insert_axis(Axis(1));
    Ok((loss, CriticParams { net: critic.net.backward(&cache, grad_out) }))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub minibatches: usize,
}

/// Trainable state: shared actor, centralized critic, their optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mappo {
    pub actor: ActorParams,
    pub critic: CriticParams,
    pub actor_opt: OptimizerState<ActorParams>,
    pub critic_opt: OptimizerState<CriticParams>,
    pub num_agents: usize,
}

impl Mappo {
    /// `obs_dim` and `state_dim` exclude the agent one-hot, which is
    /// appended here.
    pub fn new(obs_dim: usize, state_dim: usize, action_dim: usize, num_agents: usize, cfg: &LearnConfig, rng: &mut Rng) -> Self {
        let actor = ActorParams::new(obs_dim + num_agents, action_dim, &cfg.net, rng);
        let critic = CriticParams::new(state_dim + num_agents, &cfg.net, rng);
        Self {
            actor_opt: OptimizerState::new(&actor, cfg.actor_lr),
            critic_opt: OptimizerState::new(&critic, cfg.critic_lr),
            actor,
            critic,
            num_agents,
        }
    }

    pub fn with_one_hot(&self, base: &[f64], agent: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(base.len() + self.num_agents);
        v.extend_from_slice(base);
        v.extend((0..self.num_agents).map(|i| if i == agent { 1.0 } else { 0.0 }));
        v
    }

    fn stack(rows: &[Vec<f64>]) -> Array2<f64> {
        let w = rows.first().map_or(0, Vec::len);
        Array2::from_shape_fn((rows.len(), w), |(r, c)| rows[r][c])
    }

    /// Samples one action per agent. `obs` rows already carry the one-hot.
    pub fn act(&self, actor_inputs: &[Vec<f64>], rng: &mut Rng) -> Result<Vec<SampledAction>> {
        let x = Self::stack(actor_inputs);
        let (mean, log_std) = policy_forward(&self.actor, x.view())?;
        Ok(mean.rows().into_iter().map(|m| sample_action(m, log_std.view(), rng)).collect())
    }

    /// Deterministic action `tanh(mean)` per agent.
    pub fn act_deterministic(&self, actor_inputs: &[Vec<f64>]) -> Result<Vec<Array1<f64>>> {
        let x = Self::stack(actor_inputs);
        let (mean, _) = policy_forward(&self.actor, x.view())?;
        Ok(mean.rows().into_iter().map(|m| m.mapv(f64::tanh)).collect())
    }

    pub fn values(&self, critic_inputs: &[Vec<f64>]) -> Result<Array1<f64>> {
        self.critic.values(Self::stack(critic_inputs).view())
    }

    pub fn all_finite(&self) -> bool {
        self.actor.all_finite() && self.critic.all_finite()
    }

    /// Runs the configured epochs over the buffer, then leaves it untouched
    /// (the caller clears it).
    pub fn update(&mut self, buffer: &mut RolloutBuffer, cfg: &LearnConfig, rng: &mut Rng) -> Result<UpdateStats> {
        if buffer.is_empty() {
            return Err(Error::Domain("update on an empty rollout buffer".into()));
        }
        buffer.normalize_advantages();
        let mut idx: Vec<usize> = (0..buffer.len()).collect();
        let mut stats = UpdateStats::default();
        for _ in 0..cfg.epochs {
            idx.shuffle(rng);
            for chunk in idx.chunks(cfg.minibatch) {
                let batch = buffer.batch(chunk);
                let (a, ga) = actor_loss_and_grad(&self.actor, &batch, cfg.clip, cfg.entropy_coef)?;
                self.actor_opt.step(&mut self.actor, &ga);
                self.actor.clamp_log_std();
                let (c, gc) = critic_loss_and_grad(&self.critic, batch.critic_inputs.view(), &batch.returns)?;
                self.critic_opt.step(&mut self.critic, &gc);
                stats.actor_loss += a.loss;
                stats.critic_loss += c;
                stats.entropy += a.entropy;
                stats.clip_fraction += a.clip_fraction;
                stats.approx_kl += a.approx_kl;
                stats.minibatches += 1;
            }
        }
        let n = stats.minibatches as f64;
        stats.actor_loss /= n;
        stats.critic_loss /= n;
        stats.entropy /= n;
        stats.clip_fraction /= n;
        stats.approx_kl /= n;
        if !self.all_finite() {
            return Err(Error::NonFinite("network parameters after update".into()));
        }
        Ok(stats)
    }
}
