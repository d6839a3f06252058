//! Tanh-squashed Gaussian actor and scalar critic.

use std::f64::consts::{LN_2, PI};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, Parameters};
use crate::rng::Rng;
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Squashed actions are pulled inside `±(1 - SQUASH_EPS)` before `atanh`.
pub const SQUASH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
    pub hidden_gain: f64,
    pub policy_head_gain: f64,
    pub value_head_gain: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256, 256],
            log_std_init: -0.5,
            hidden_gain: std::f64::consts::SQRT_2,
            policy_head_gain: 0.01,
            value_head_gain: 1.0,
        }
    }
}

/// Policy network: MLP producing the pre-squash mean plus a
/// state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorParams {
    pub trunk: Mlp,
    pub log_std: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticParams {
    pub net: Mlp,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl ActorParams {
    pub fn new(input: usize, action_dim: usize, cfg: &NetConfig, rng: &mut Rng) -> Self {
        Self {
            trunk: Mlp::new(&sizes(input, &cfg.hidden, action_dim), cfg.hidden_gain, cfg.policy_head_gain, rng),
            log_std: Array1::from_elem(action_dim, cfg.log_std_init.clamp(LOG_STD_MIN, LOG_STD_MAX)),
        }
    }

    pub fn zeros(input: usize, hidden: &[usize], action_dim: usize) -> Self {
        Self {
            trunk: Mlp::zeros(&sizes(input, hidden, action_dim)),
            log_std: Array1::zeros(action_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std.mapv_inplace(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }
}

impl CriticParams {
    pub fn new(input: usize, cfg: &NetConfig, rng: &mut Rng) -> Self {
        Self {
            net: Mlp::new(&sizes(input, &cfg.hidden, 1), cfg.hidden_gain, cfg.value_head_gain, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn values(&self, states: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.net.forward(states)?.column(0).to_owned())
    }
}

impl Parameters for ActorParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.trunk.tensors();
        t.push(self.log_std.as_slice().expect("standard layout"));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.trunk.tensors_mut();
        t.push(self.log_std.as_slice_mut().expect("standard layout"));
        t
    }
}

impl Parameters for CriticParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.net.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.tensors_mut()
    }
}

/// Deterministic forward pass: pre-squash means (one row per observation)
/// and the shared log-std.
pub fn policy_forward(actor: &ActorParams, obs: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    if obs.ncols() != actor.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "policy observation",
            expected: actor.input_dim(),
            actual: obs.ncols(),
        });
    }
    Ok((actor.trunk.forward(obs)?, actor.log_std.clone()))
}

/// `ln(1 - tanh(u)^2)`, stable for large `|u|`.
pub fn log1m_tanh_sq(u: f64) -> f64 {
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// Gaussian log-density of pre-squash `u` (no squashing correction).
pub fn gaussian_log_prob(u: ArrayView1<f64>, mean: ArrayView1<f64>, log_std: ArrayView1<f64>) -> f64 {
    let mut lp = 0.0;
    for i in 0..u.len() {
        let z = (u[i] - mean[i]) * (-log_std[i]).exp();
        lp += -0.5 * z * z - log_std[i] - 0.5 * (2.0 * PI).ln();
    }
    lp
}

/// Log-density of `a = tanh(u)` given its pre-image `u`.
pub fn squashed_log_prob(u: ArrayView1<f64>, mean: ArrayView1<f64>, log_std: ArrayView1<f64>) -> f64 {
    gaussian_log_prob(u, mean, log_std) - u.iter().map(|&x| log1m_tanh_sq(x)).sum::<f64>()
}

/// Log-density of a squashed action; the pre-image is recovered with a
/// clamped `atanh`.
pub fn action_log_prob(action: ArrayView1<f64>, mean: ArrayView1<f64>, log_std: ArrayView1<f64>) -> f64 {
    let u = action.mapv(|a| a.clamp(-1.0 + SQUASH_EPS, 1.0 - SQUASH_EPS).atanh());
    squashed_log_prob(u.view(), mean, log_std)
}

/// Entropy of the pre-squash Gaussian.
pub fn gaussian_entropy(log_std: ArrayView1<f64>) -> f64 {
    log_std.iter().map(|l| l + 0.5 * (1.0 + (2.0 * PI).ln())).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub pre_squash: Array1<f64>,
    pub action: Array1<f64>,
    pub log_prob: f64,
}

pub fn sample_action(mean: ArrayView1<f64>, log_std: ArrayView1<f64>, rng: &mut Rng) -> SampledAction {
    let u: Array1<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &l)| {
            let z: f64 = StandardNormal.sample(rng);
            m + l.exp() * z
        })
        .collect();
    let action = u.mapv(f64::tanh);
    let log_prob = squashed_log_prob(u.view(), mean, log_std);
    SampledAction {
        pre_squash: u,
        action,
        log_prob,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    /// Composite Simpson rule over `[a, b]` with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn zero_network_gives_zero_mean() {
        let actor = ActorParams::zeros(6, &[8, 8], 4);
        let obs = Array2::from_elem((3, 6), 0.7);
        let (mean, log_std) = policy_forward(&actor, obs.view()).unwrap();
        assert!(mean.iter().all(|m| *m == 0.0));
        assert!(mean.mapv(f64::tanh).iter().all(|a| *a == 0.0));
        assert_eq!(log_std, Array1::<f64>::zeros(4));
    }

    #[test]
    fn forward_is_pure() {
        let mut r = rng::stream(3, "t", 0);
        let actor = ActorParams::new(5, 4, &NetConfig { hidden: vec![16, 16], ..NetConfig::default() }, &mut r);
        let obs = array![[0.1, 0.2, 0.3, 0.4, 0.5]];
        assert_eq!(policy_forward(&actor, obs.view()).unwrap(), policy_forward(&actor, obs.view()).unwrap());
        assert!(policy_forward(&actor, array![[0.1, 0.2]].view()).is_err());
    }

    #[test]
    fn squashed_density_matches_quadrature() {
        // 1-D slice: density of tanh(u), u ~ N(mu, sigma)
        let mu = 0.4;
        let log_std = -0.3f64;
        let sigma = log_std.exp();
        let normal_pdf = |u: f64| (-(u - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
        let mut r = rng::stream(4, "t", 0);
        for _ in 0..5 {
            let s = sample_action(array![mu].view(), array![log_std].view(), &mut r);
            let a = s.action[0];
            let h = 1e-4;
            // P(a - h < tanh(U) < a + h) by quadrature in u-space
            let mass = simpson(normal_pdf, (a - h).atanh(), (a + h).atanh(), 200);
            let oracle = (mass / (2.0 * h)).ln();
            assert!((s.log_prob - oracle).abs() < 1e-4, "{} vs {}", s.log_prob, oracle);
            let again = action_log_prob(s.action.view(), array![mu].view(), array![log_std].view());
            assert!((again - s.log_prob).abs() < 1e-6);
        }
        // the density integrates to one over (-1, 1)
        let dens = |a: f64| {
            action_log_prob(array![a].view(), array![mu].view(), array![log_std].view()).exp()
        };
        let total = simpson(dens, -0.999_999, 0.999_999, 20_000);
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn log1m_tanh_sq_is_stable() {
        for u in [-30.0, -3.0, 0.0, 0.5, 4.0, 40.0] {
            let naive = (1.0 - f64::tanh(u).powi(2)).ln();
            if naive.is_finite() && u.abs() < 10.0 {
                assert!((log1m_tanh_sq(u) - naive).abs() < 1e-10);
            }
            assert!(log1m_tanh_sq(u).is_finite());
        }
    }

    #[test]
    fn entropy_of_unit_gaussian() {
        let h = gaussian_entropy(array![0.0, 0.0].view());
        assert!((h - (1.0 + (2.0 * PI).ln())).abs() < 1e-15);
    }
}
