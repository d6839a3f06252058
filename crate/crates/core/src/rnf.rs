//! Reset-and-finetune controller: tracks a windowed mean of the episode
//! rate fairness and, once it plateaus, clears both optimizers' moments and
//! decays their learning rates. Fires at most once per run.

use serde::{Deserialize, Serialize};

use crate::learn::mlp::Parameters;
use crate::learn::OptimizerState;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnfConfig {
    pub window: usize,
    /// Relative plateau tolerance.
    pub tolerance: f64,
    pub kappa: f64,
    /// Earliest (1-based) episode at which a check may fire.
    pub min_episode: usize,
    /// Fire unconditionally at this episode instead of detecting a plateau.
    pub force_trigger_at: Option<usize>,
}

impl Default for RnfConfig {
    fn default() -> Self {
        Self {
            window: 50,
            tolerance: 0.02,
            kappa: 0.1,
            min_episode: 100,
            force_trigger_at: None,
        }
    }
}

impl RnfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("rnf window must be at least 1".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::Config(format!("rnf kappa must lie in (0, 1), got {}", self.kappa)));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config("rnf tolerance must be finite and non-negative".into()));
        }
        if self.force_trigger_at == Some(0) {
            return Err(Error::Config("force_trigger_at is a 1-based episode".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnfState {
    pub config: RnfConfig,
    /// One entry per finished episode; entry `i` is episode `i + 1`.
    pub jfi_history: Vec<f64>,
    pub triggered: bool,
    pub trigger_episode: Option<usize>,
}

impl RnfState {
    pub fn new(config: RnfConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            jfi_history: Vec::new(),
            triggered: false,
            trigger_episode: None,
        })
    }

    /// Records the fairness of the episode just finished.
    pub fn update_window(&mut self, episode_jfi: f64) -> Result<()> {
        if !episode_jfi.is_finite() {
            return Err(Error::NonFinite("episode fairness fed to the reset controller".into()));
        }
        self.jfi_history.push(episode_jfi);
        Ok(())
    }

    pub fn episodes(&self) -> usize {
        self.jfi_history.len()
    }

    /// Mean of the `W` entries ending at (1-based) episode `e`, if available.
    pub fn window_mean_at(&self, e: usize) -> Option<f64> {
        let w = self.config.window;
        if e < w || e > self.jfi_history.len() {
            return None;
        }
        Some(crate::metrics::mean(&self.jfi_history[e - w..e]))
    }

    /// Mean of the most recent window.
    pub fn window_mean(&self) -> Option<f64> {
        self.window_mean_at(self.jfi_history.len())
    }

    /// Checks for a plateau at (1-based) episode `e` and latches on the
    /// first firing.
    pub fn check_trigger(&mut self, e: usize) -> bool {
        if self.triggered {
            return false;
        }
        let fire = match self.config.force_trigger_at {
            Some(at) => e == at,
            None => {
                let w = self.config.window;
                e >= 2 * w
                    && e >= self.config.min_episode
                    && match (self.window_mean_at(e), self.window_mean_at(e - w)) {
                        (Some(now), Some(prev)) => (now - prev).abs() < self.config.tolerance * prev,
                        _ => false,
                    }
            }
        };
        if fire {
            self.triggered = true;
            self.trigger_episode = Some(e);
        }
        fire
    }
}

/// Zeroes both optimizers' moments and step counters and sets each rate to
/// `kappa` times its initial value, in one call.
pub fn apply_reset<A: Parameters, C: Parameters>(actor_opt: &mut OptimizerState<A>, critic_opt: &mut OptimizerState<C>, kappa: f64) {
    actor_opt.reset_moments();
    critic_opt.reset_moments();
    actor_opt.learning_rate = kappa * actor_opt.initial_learning_rate;
    critic_opt.learning_rate = kappa * critic_opt.initial_learning_rate;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feed(state: &mut RnfState, stream: impl Iterator<Item = f64>) -> Option<usize> {
        for (i, j) in stream.enumerate() {
            state.update_window(j).unwrap();
            state.check_trigger(i + 1);
        }
        state.trigger_episode
    }

    #[test]
    fn constant_stream_fires_at_twice_the_window() {
        let mut s = RnfState::new(RnfConfig::default()).unwrap();
        assert_eq!(feed(&mut s, std::iter::repeat(0.4).take(300)), Some(100));
        assert!((s.window_mean().unwrap() - 0.4).abs() < 1e-15);
        assert!(!s.check_trigger(301));
    }

    #[test]
    fn warm_up_and_ramp_mean() {
        let cfg = RnfConfig {
            window: 5,
            ..RnfConfig::default()
        };
        let mut s = RnfState::new(cfg).unwrap();
        for e in 1..=4 {
            s.update_window(0.01 * e as f64).unwrap();
        }
        assert_eq!(s.window_mean(), None);
        for e in 5..=10 {
            s.update_window(0.01 * e as f64).unwrap();
        }
        assert!((s.window_mean().unwrap() - 0.08).abs() < 1e-15);
    }

    #[test]
    fn steady_growth_never_fires() {
        let cfg = RnfConfig {
            window: 10,
            tolerance: 0.01,
            min_episode: 0,
            ..RnfConfig::default()
        };
        let mut s = RnfState::new(cfg).unwrap();
        // 5% growth per window, compounded per episode
        let per_episode = 1.05f64.powf(1.0 / 10.0);
        assert_eq!(feed(&mut s, (0..500).map(|e| 0.1 * per_episode.powi(e))), None);
    }

    #[test]
    fn min_episode_floor_delays_firing() {
        let cfg = RnfConfig {
            window: 10,
            min_episode: 37,
            ..RnfConfig::default()
        };
        let mut s = RnfState::new(cfg).unwrap();
        assert_eq!(feed(&mut s, std::iter::repeat(0.5).take(60)), Some(37));
    }

    #[test]
    fn forced_trigger() {
        let cfg = RnfConfig {
            force_trigger_at: Some(7),
            ..RnfConfig::default()
        };
        let mut s = RnfState::new(cfg).unwrap();
        assert_eq!(feed(&mut s, (0..20).map(|e| e as f64)), Some(7));
    }

    #[test]
    fn rejects_bad_config_and_input() {
        assert!(RnfState::new(RnfConfig { window: 0, ..RnfConfig::default() }).is_err());
        assert!(RnfState::new(RnfConfig { kappa: 1.0, ..RnfConfig::default() }).is_err());
        let mut s = RnfState::new(RnfConfig::default()).unwrap();
        assert!(s.update_window(f64::NAN).is_err());
    }
}
