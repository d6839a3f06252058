//! Fairness and efficiency metrics.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Jain's fairness index `(Σx)² / (n Σx²)`.
///
/// Lies in `[1/n, 1]`: one when all entries are equal, `1/n` when a single
/// entry is non-zero. An all-zero (or empty) input is undefined.
pub fn jain_index(values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Domain(
            "Jain index needs finite non-negative values".into(),
        ));
    }
    let sum: f64 = values.iter().sum();
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    if values.is_empty() || sum_sq == 0.0 {
        return Err(Error::UndefinedJain);
    }
    Ok(sum * sum / (values.len() as f64 * sum_sq))
}

/// Reward-side Jain index: the undefined case maps to zero.
pub fn jain_or_zero(values: &[f64]) -> f64 {
    jain_index(values).unwrap_or(0.0)
}

/// System energy efficiency in bits per Joule: total throughput over total
/// radiated power in watts.
pub fn energy_efficiency(total_rate_bps: f64, powers_mw: &[f64], epsilon_w: f64) -> f64 {
    let watts: f64 = powers_mw.iter().sum::<f64>() / 1000.0;
    total_rate_bps / (watts + epsilon_w)
}

/// Time-averaged EE divided by the static-random reference EE.
pub fn nee(episode_ee: &[f64], random_baseline_mean_ee: f64) -> Result<f64> {
    if !(random_baseline_mean_ee > 0.0) {
        return Err(Error::Domain(format!(
            "NEE baseline must be positive, got {random_baseline_mean_ee}"
        )));
    }
    if episode_ee.is_empty() {
        return Err(Error::Domain("NEE needs at least one step".into()));
    }
    Ok(mean(episode_ee) / random_baseline_mean_ee)
}

/// Percentage of target users covered, averaged over the steps.
pub fn coverage_rate(masks: &[Vec<bool>]) -> Result<f64> {
    if masks.is_empty() {
        return Err(Error::Domain("coverage needs at least one step".into()));
    }
    let per_step = masks.iter().map(|m| {
        if m.is_empty() {
            0.0
        } else {
            m.iter().filter(|c| **c).count() as f64 / m.len() as f64
        }
    });
    Ok(100.0 * per_step.sum::<f64>() / masks.len() as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1); zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Fraction in `[0, 1]`.
    pub mean_coverage: f64,
    pub nee: f64,
    pub jfi_load_avg: f64,
    pub jfi_rate_avg: f64,
    pub mean_reward: f64,
    /// Reward summed over steps and agents.
    pub total_reward: f64,
    pub mean_ee: f64,
    pub rnf_triggered: bool,
}

/// Per-step accumulator for one episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodeAccumulator {
    pub ee: Vec<f64>,
    pub coverage: Vec<f64>,
    pub jfi_load: Vec<f64>,
    pub jfi_rate: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl EpisodeAccumulator {
    pub fn push(&mut self, ee: f64, coverage_fraction: f64, jfi_load: f64, jfi_rate: f64, rewards: &[f64]) {
        self.ee.push(ee);
        self.coverage.push(coverage_fraction);
        self.jfi_load.push(jfi_load);
        self.jfi_rate.push(jfi_rate);
        self.rewards.extend_from_slice(rewards);
    }

    pub fn steps(&self) -> usize {
        self.ee.len()
    }

    pub fn finish(&self, random_baseline_mean_ee: f64, rnf_triggered: bool) -> Result<EpisodeMetrics> {
        Ok(EpisodeMetrics {
            mean_coverage: mean(&self.coverage),
            nee: nee(&self.ee, random_baseline_mean_ee)?,
            jfi_load_avg: mean(&self.jfi_load),
            jfi_rate_avg: mean(&self.jfi_rate),
            mean_reward: mean(&self.rewards),
            total_reward: self.rewards.iter().sum(),
            mean_ee: mean(&self.ee),
            rnf_triggered,
        })
    }
}

/// Mean and sample std of each metric over a set of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: std_dev(xs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAggregate {
    pub episodes: usize,
    pub coverage_pct: MetricSummary,
    pub nee: MetricSummary,
    pub jfi_load: MetricSummary,
    pub jfi_rate: MetricSummary,
    pub total_reward: MetricSummary,
}

impl MetricsAggregate {
    pub fn of(episodes: &[EpisodeMetrics]) -> Self {
        let col = |f: fn(&EpisodeMetrics) -> f64| {
            MetricSummary::of(&episodes.iter().map(f).collect::<Vec<_>>())
        };
        Self {
            episodes: episodes.len(),
            coverage_pct: col(|e| 100.0 * e.mean_coverage),
            nee: col(|e| e.nee),
            jfi_load: col(|e| e.jfi_load_avg),
            jfi_rate: col(|e| e.jfi_rate_avg),
            total_reward: col(|e| e.total_reward),
        }
    }
}
