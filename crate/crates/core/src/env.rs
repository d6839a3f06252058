//! The multi-agent coverage environment.
//!
//! Each UAV agent sees a 14-dimensional local observation and emits a
//! 4-dimensional squashed action (three displacement components and a power
//! adjustment). Positions are projected onto the speed limit, clamped to the
//! area and altitude corridor, and clamping raises that agent's boundary
//! penalty. Rewards share four team components (coverage, energy
//! efficiency, load fairness, rate fairness) and add a per-agent penalty.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams};
use crate::metrics;
use crate::network::{self, LinkSnapshot};
use crate::rng;
use crate::scenario::{horizontal_distance, Point2, Point3, Scenario};
use crate::{Error, Result};

pub const OBS_DIM: usize = 14;
pub const ACTION_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Jain-index fairness terms (max-min flavour).
    #[default]
    Mmf,
    /// Normalized sum of log rates (proportional fairness).
    Pf,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmf" => Ok(Objective::Mmf),
            "pf" => Ok(Objective::Pf),
            other => Err(Error::Config(format!("unknown objective `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub coverage: f64,
    pub ee: f64,
    pub load: f64,
    pub rate: f64,
    pub penalty: f64,
    /// Weight of the sum-log-rate term in PF mode.
    pub pf: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            coverage: 1.0,
            ee: 1.0,
            load: 0.5,
            rate: 1.0,
            penalty: 1.0,
            pf: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyWeights {
    pub collision: f64,
    pub boundary: f64,
    pub backhaul: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            collision: 1.0,
            boundary: 0.5,
            backhaul: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub horizon_steps: usize,
    pub dt: f64,
    pub v_max: f64,
    /// Vertical displacement limit as a fraction of `v_max * dt`.
    pub vertical_speed_factor: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    pub power_step_mw: f64,
    pub d_min: f64,
    pub coverage_threshold_db: f64,
    pub backhaul_threshold_db: f64,
    /// Backhaul SNR span (dB above threshold) mapped onto `[0, 1]`.
    pub backhaul_norm_span_db: f64,
    pub ee_epsilon_w: f64,
    pub histogram_grid: usize,
    pub objective: Objective,
    pub weights: RewardWeights,
    pub penalties: PenaltyWeights,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 100,
            dt: 1.0,
            v_max: 5.0,
            vertical_speed_factor: 0.2,
            h_min: 80.0,
            h_max: 120.0,
            p_min_mw: 100.0,
            p_max_mw: 200.0,
            power_step_mw: 10.0,
            d_min: 50.0,
            coverage_threshold_db: 0.0,
            backhaul_threshold_db: 0.0,
            backhaul_norm_span_db: 40.0,
            ee_epsilon_w: 1e-9,
            histogram_grid: 4,
            objective: Objective::Mmf,
            weights: RewardWeights::default(),
            penalties: PenaltyWeights::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let pw = &self.penalties;
        let nonneg = [
            w.coverage, w.ee, w.load, w.rate, w.penalty, w.pf, pw.collision, pw.boundary, pw.backhaul,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("reward and penalty weights must be finite and non-negative".into()));
        }
        if self.horizon_steps == 0 {
            return Err(Error::Config("horizon_steps must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.v_max >= 0.0 && self.vertical_speed_factor >= 0.0) {
            return Err(Error::Config("dt must be positive and speeds non-negative".into()));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_max) {
            return Err(Error::Config("need 0 < h_min <= h_max".into()));
        }
        if !(self.p_min_mw > 0.0 && self.p_min_mw <= self.p_max_mw) {
            return Err(Error::Config("need 0 < p_min <= p_max".into()));
        }
        if !(self.power_step_mw >= 0.0 && self.d_min >= 0.0 && self.backhaul_norm_span_db > 0.0) {
            return Err(Error::Config("power step, d_min and backhaul span out of range".into()));
        }
        if self.histogram_grid == 0 {
            return Err(Error::Config("histogram_grid must be at least 1".into()));
        }
        Ok(())
    }

    pub fn mid_power_mw(&self) -> f64 {
        0.5 * (self.p_min_mw + self.p_max_mw)
    }

    pub fn global_state_dim(&self, num_uavs: usize) -> usize {
        num_uavs * OBS_DIM + self.histogram_grid * self.histogram_grid + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionVector(pub [f64; ACTION_DIM]);

impl ActionVector {
    pub const ZERO: ActionVector = ActionVector([0.0; ACTION_DIM]);
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub collision: u32,
    pub boundary: u32,
    pub backhaul: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetState {
    pub positions: Vec<Point3>,
    pub powers_mw: Vec<f64>,
    pub t: usize,
    pub violations: Vec<ViolationCounts>,
}

impl FleetState {
    pub fn num_uavs(&self) -> usize {
        self.positions.len()
    }

    /// Checks altitude, area and power bounds.
    pub fn check_bounds(&self, area_side: f64, config: &EnvConfig) -> Result<()> {
        for (n, (q, &p)) in self.positions.iter().zip(&self.powers_mw).enumerate() {
            if !q.iter().all(|v| v.is_finite()) {
                return Err(Error::Domain(format!("UAV {n} position is not finite")));
            }
            if q[0] < 0.0 || q[0] > area_side || q[1] < 0.0 || q[1] > area_side {
                return Err(Error::Domain(format!("UAV {n} outside the service area: {q:?}")));
            }
            if q[2] < config.h_min || q[2] > config.h_max {
                return Err(Error::Domain(format!("UAV {n} outside the altitude corridor: {}", q[2])));
            }
            if !(config.p_min_mw..=config.p_max_mw).contains(&p) {
                return Err(Error::Domain(format!("UAV {n} power {p} mW out of range")));
            }
        }
        Ok(())
    }
}

/// Local observation; every entry lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn position(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }
    pub fn power(&self) -> f64 {
        self.0[3]
    }
    pub fn nearest_user(&self) -> f64 {
        self.0[4]
    }
    pub fn load_fraction(&self) -> f64 {
        self.0[5]
    }
    pub fn boundary_margins(&self) -> [f64; 4] {
        [self.0[6], self.0[7], self.0[8], self.0[9]]
    }
    pub fn violation_history(&self) -> [f64; 3] {
        [self.0[10], self.0[11], self.0[12]]
    }
    pub fn backhaul_quality(&self) -> f64 {
        self.0[13]
    }
}

/// Centralized critic input: every local observation, the user histogram
/// and the current rate fairness index, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardComponents {
    pub coverage: f64,
    pub ee: f64,
    pub load: f64,
    pub rate: f64,
    /// Normalized sum-log-rate (used in PF mode only).
    pub pf: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PenaltyFlags {
    pub collisions: u32,
    pub boundary: bool,
    pub backhaul: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub components: RewardComponents,
    pub flags: PenaltyFlags,
    pub weights: RewardWeights,
    pub objective: Objective,
    pub total: f64,
}

impl RewardBreakdown {
    /// Recombines the logged components with the logged weights.
    pub fn recombine(&self) -> f64 {
        assemble_reward(&self.components, &self.weights, self.objective)
    }
}

/// Weighted reward. MMF: `w1 cov + w2 ee + w3 load + w4 rate - w5 pen`;
/// PF swaps the two fairness terms for `w_pf * pf`.
pub fn assemble_reward(c: &RewardComponents, w: &RewardWeights, objective: Objective) -> f64 {
    let shared = w.coverage * c.coverage + w.ee * c.ee;
    let fairness = match objective {
        Objective::Mmf => w.load * c.load + w.rate * c.rate,
        Objective::Pf => w.pf * c.pf,
    };
    shared + fairness - w.penalty * c.penalty
}

/// Per-agent penalty `ω_c #collisions + ω_b 1[clamped] + ω_bh 1[weak backhaul]`.
pub fn compute_penalty(
    positions: &[Point3],
    clamped: &[bool],
    backhaul_snr_db: &[f64],
    config: &EnvConfig,
) -> Vec<(f64, PenaltyFlags)> {
    let n = positions.len();
    (0..n)
        .map(|i| {
            let collisions = (0..n)
                .filter(|&j| j != i && dist3(positions[i], positions[j]) < config.d_min)
                .count() as u32;
            let flags = PenaltyFlags {
                collisions,
                boundary: clamped[i],
                backhaul: backhaul_snr_db[i] < config.backhaul_threshold_db,
            };
            let pw = &config.penalties;
            let pen = pw.collision * f64::from(collisions)
                + pw.boundary * f64::from(u8::from(flags.boundary))
                + pw.backhaul * f64::from(u8::from(flags.backhaul));
            (pen, flags)
        })
        .collect()
}

fn dist3(a: Point3, b: Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Running min-max normalizer over every value seen so far.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningMinMax {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl RunningMinMax {
    pub fn observe(&mut self, x: f64) -> f64 {
        let lo = self.min.map_or(x, |m| m.min(x));
        let hi = self.max.map_or(x, |m| m.max(x));
        self.min = Some(lo);
        self.max = Some(hi);
        self.normalize(x)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        match (self.min, self.max) {
            (Some(lo), Some(hi)) if hi > lo => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            _ => 0.0,
        }
    }
}

/// Normalizer state that lives for a whole training run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardNormalizers {
    pub ee: RunningMinMax,
    pub pf: RunningMinMax,
}

/// Step-level diagnostics beyond the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Raw system energy efficiency in bits per Joule.
    pub ee: f64,
    pub coverage_fraction: f64,
    pub jfi_load: f64,
    pub jfi_rate: f64,
    pub clamped: Vec<bool>,
    pub power_saturated: Vec<bool>,
    pub backhaul_snr_db: Vec<f64>,
    pub loads: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    pub global_state: GlobalState,
    pub rewards: Vec<f64>,
    pub breakdowns: Vec<RewardBreakdown>,
    pub info: StepInfo,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    channel: ChannelParams,
    area_side: f64,
    gbs_position: Point3,
    gbs_power_dbm: f64,
    targets: Vec<Point2>,
    gbs_user_positions: Vec<Point2>,
    histogram: Vec<f64>,
    state: FleetState,
    shadow_db: Vec<f64>,
    normalizers: RewardNormalizers,
    snapshot: Option<LinkSnapshot>,
    backhaul_snr_db: Vec<f64>,
    jfi_rate: f64,
}

impl Env {
    pub fn new(scenario: &Scenario, channel: ChannelParams, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        channel.validate()?;
        let area_side = scenario.config.area_side;
        let grid = config.histogram_grid;
        let mut histogram = vec![0.0; grid * grid];
        if scenario.users.is_empty() {
            histogram.iter_mut().for_each(|h| *h = 1.0 / (grid * grid) as f64);
        } else {
            let cell = |v: f64| (((v / area_side) * grid as f64).floor() as usize).min(grid - 1);
            for u in &scenario.users {
                histogram[cell(u[1]) * grid + cell(u[0])] += 1.0;
            }
            let total = scenario.users.len() as f64;
            histogram.iter_mut().for_each(|h| *h /= total);
        }
        Ok(Self {
            config,
            channel,
            area_side,
            gbs_position: scenario.config.gbs_position,
            gbs_power_dbm: channel::mw_to_dbm(scenario.config.gbs_power_mw),
            targets: scenario.uav_user_positions(),
            gbs_user_positions: scenario.gbs_users.iter().map(|&i| scenario.users[i]).collect(),
            histogram,
            state: FleetState {
                positions: vec![],
                powers_mw: vec![],
                t: 0,
                violations: vec![],
            },
            shadow_db: vec![],
            normalizers: RewardNormalizers::default(),
            snapshot: None,
            backhaul_snr_db: vec![],
            jfi_rate: 0.0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn state(&self) -> &FleetState {
        &self.state
    }

    pub fn area_side(&self) -> f64 {
        self.area_side
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn snapshot(&self) -> Option<&LinkSnapshot> {
        self.snapshot.as_ref()
    }

    pub fn normalizers(&self) -> RewardNormalizers {
        self.normalizers
    }

    pub fn set_normalizers(&mut self, n: RewardNormalizers) {
        self.normalizers = n;
    }

    pub fn global_state_dim(&self, num_uavs: usize) -> usize {
        self.config.global_state_dim(num_uavs)
    }

    /// Starts an episode at the given poses with mid-range powers. The
    /// episode seed fixes the terrestrial shadowing draws.
    pub fn reset(&mut self, initial_poses: &[Point3], episode_seed: u64) -> Result<(Vec<Observation>, GlobalState)> {
        if initial_poses.is_empty() {
            return Err(Error::Config("need at least one UAV pose".into()));
        }
        let n = initial_poses.len();
        let state = FleetState {
            positions: initial_poses.to_vec(),
            powers_mw: vec![self.config.mid_power_mw(); n],
            t: 0,
            violations: vec![ViolationCounts::default(); n],
        };
        state.check_bounds(self.area_side, &self.config)?;
        self.state = state;

        let mut r = rng::stream(episode_seed, "shadow", 0);
        let shadow = Normal::new(0.0, self.channel.shadow_sigma_db)
            .map_err(|e| Error::Config(format!("shadow sigma: {e}")))?;
        self.shadow_db = self.gbs_user_positions.iter().map(|_| shadow.sample(&mut r)).collect();

        self.refresh_links()?;
        let obs = self.observations();
        let gs = self.global_state(&obs);
        Ok((obs, gs))
    }

    fn powers_dbm(&self) -> Vec<f64> {
        self.state.powers_mw.iter().map(|&p| channel::mw_to_dbm(p)).collect()
    }

    fn refresh_links(&mut self) -> Result<()> {
        let powers = self.powers_dbm();
        let snap = network::evaluate_links(
            &self.state.positions,
            &powers,
            &self.targets,
            &self.channel,
            self.config.coverage_threshold_db,
        )?;
        self.jfi_rate = metrics::jain_or_zero(&served_rates(&snap.rates));
        self.backhaul_snr_db = self
            .state
            .positions
            .iter()
            .zip(&powers)
            .map(|(&q, &p)| {
                channel::backhaul_pathloss(self.gbs_position, q, &self.channel)
                    .map(|pl| channel::snr_db(p, pl, &self.channel, self.channel.bandwidth_hz))
            })
            .collect::<Result<_>>()?;
        self.snapshot = Some(snap);
        Ok(())
    }

    /// SNR of each terrestrial user under this episode's shadowing.
    pub fn gbs_user_snr_db(&self) -> Result<Vec<f64>> {
        self.gbs_user_positions
            .iter()
            .zip(&self.shadow_db)
            .map(|(&x, &s)| {
                channel::gbs_pathloss(self.gbs_position, x, s, &self.channel).map(|pl| {
                    channel::snr_db(self.gbs_power_dbm, pl, &self.channel, self.channel.bandwidth_hz)
                })
            })
            .collect()
    }

    pub fn observations(&self) -> Vec<Observation> {
        let cfg = &self.config;
        let d = self.area_side;
        let diag = d * std::f64::consts::SQRT_2;
        let snap = self.snapshot.as_ref().expect("reset before observing");
        let m_uav = self.targets.len().max(1) as f64;
        let t = self.state.t;
        let alt_span = (cfg.h_max - cfg.h_min).max(f64::MIN_POSITIVE);
        let p_span = (cfg.p_max_mw - cfg.p_min_mw).max(f64::MIN_POSITIVE);
        self.state
            .positions
            .iter()
            .enumerate()
            .map(|(n, q)| {
                let nearest = self
                    .targets
                    .iter()
                    .map(|&x| horizontal_distance([q[0], q[1]], x))
                    .fold(f64::INFINITY, f64::min);
                let v = self.state.violations[n];
                let hist = |c: u32| if t == 0 { 0.0 } else { (f64::from(c) / t as f64).min(1.0) };
                let bh = ((self.backhaul_snr_db[n] - cfg.backhaul_threshold_db) / cfg.backhaul_norm_span_db)
                    .clamp(0.0, 1.0);
                let u = |x: f64| x.clamp(0.0, 1.0);
                Observation([
                    u(q[0] / d),
                    u(q[1] / d),
                    u((q[2] - cfg.h_min) / alt_span),
                    u((self.state.powers_mw[n] - cfg.p_min_mw) / p_span),
                    if nearest.is_finite() { u(nearest / diag) } else { 1.0 },
                    u(snap.assoc.loads[n] as f64 / m_uav),
                    u(q[0] / d),
                    u((d - q[0]) / d),
                    u(q[1] / d),
                    u((d - q[1]) / d),
                    hist(v.collision),
                    hist(v.boundary),
                    hist(v.backhaul),
                    bh,
                ])
            })
            .collect()
    }

    fn global_state(&self, obs: &[Observation]) -> GlobalState {
        let mut v = Vec::with_capacity(self.global_state_dim(obs.len()));
        for o in obs {
            v.extend_from_slice(&o.0);
        }
        v.extend_from_slice(&self.histogram);
        v.push(self.jfi_rate);
        GlobalState(v)
    }

    pub fn step(&mut self, actions: &[ActionVector]) -> Result<StepOutcome> {
        let n = self.state.num_uavs();
        if n == 0 {
            return Err(Error::Domain("step before reset".into()));
        }
        if actions.len() != n {
            return Err(Error::ShapeMismatch {
                context: "env step actions",
                expected: n,
                actual: actions.len(),
            });
        }
        if self.state.t >= self.config.horizon_steps {
            return Err(Error::Domain("episode already finished".into()));
        }
        if actions.iter().any(|a| a.0.iter().any(|v| v.is_nan())) {
            return Err(Error::NonFinite("NaN action".into()));
        }

        let cfg = self.config.clone();
        let reach = cfg.v_max * cfg.dt;
        let mut clamped = vec![false; n];
        let mut saturated = vec![false; n];
        for (i, a) in actions.iter().enumerate() {
            let a = a.0.map(|v| v.clamp(-1.0, 1.0));
            let (mut dx, mut dy) = (reach * a[0], reach * a[1]);
            let h = dx.hypot(dy);
            if h > reach {
                dx *= reach / h;
                dy *= reach / h;
            }
            let dz = cfg.vertical_speed_factor * reach * a[2];
            let q = &mut self.state.positions[i];
            let target = [q[0] + dx, q[1] + dy, q[2] + dz];
            let bounded = [
                target[0].clamp(0.0, self.area_side),
                target[1].clamp(0.0, self.area_side),
                target[2].clamp(cfg.h_min, cfg.h_max),
            ];
            clamped[i] = bounded != target;
            *q = bounded;

            let p = &mut self.state.powers_mw[i];
            let want = *p + cfg.power_step_mw * a[3];
            *p = want.clamp(cfg.p_min_mw, cfg.p_max_mw);
            saturated[i] = *p != want;
        }
        self.state.t += 1;
        self.refresh_links()?;

        let snap = self.snapshot.as_ref().expect("links refreshed");
        let m_uav = self.targets.len();
        let covered = snap.covered.iter().filter(|c| **c).count();
        let coverage = if m_uav == 0 { 0.0 } else { covered as f64 / m_uav as f64 };
        let covered_rate: f64 = snap
            .rates
            .iter()
            .zip(&snap.covered)
            .filter(|(_, c)| **c)
            .map(|(r, _)| r)
            .sum();
        let ee = metrics::energy_efficiency(covered_rate, &self.state.powers_mw, cfg.ee_epsilon_w);
        let loads: Vec<f64> = snap.assoc.loads.iter().map(|&k| k as f64).collect();
        let jfi_load = metrics::jain_or_zero(&loads);
        let jfi_rate = self.jfi_rate;
        let ee_norm = self.normalizers.ee.observe(ee);
        let pf_norm = match cfg.objective {
            Objective::Pf => {
                let raw: f64 = served_rates(&snap.rates).iter().map(|r| r.ln_1p()).sum();
                self.normalizers.pf.observe(raw)
            }
            Objective::Mmf => 0.0,
        };

        let penalties = compute_penalty(&self.state.positions, &clamped, &self.backhaul_snr_db, &cfg);
        let mut rewards = Vec::with_capacity(n);
        let mut breakdowns = Vec::with_capacity(n);
        for (i, (pen, flags)) in penalties.into_iter().enumerate() {
            let v = &mut self.state.violations[i];
            v.collision += u32::from(flags.collisions > 0);
            v.boundary += u32::from(flags.boundary);
            v.backhaul += u32::from(flags.backhaul);
            let components = RewardComponents {
                coverage,
                ee: ee_norm,
                load: jfi_load,
                rate: jfi_rate,
                pf: pf_norm,
                penalty: pen,
            };
            let total = assemble_reward(&components, &cfg.weights, cfg.objective);
            rewards.push(total);
            breakdowns.push(RewardBreakdown {
                components,
                flags,
                weights: cfg.weights,
                objective: cfg.objective,
                total,
            });
        }

        let info = StepInfo {
            ee,
            coverage_fraction: coverage,
            jfi_load,
            jfi_rate,
            clamped,
            power_saturated: saturated,
            backhaul_snr_db: self.backhaul_snr_db.clone(),
            loads: snap.assoc.loads.clone(),
        };
        let observations = self.observations();
        let global_state = self.global_state(&observations);
        Ok(StepOutcome {
            observations,
            global_state,
            rewards,
            breakdowns,
            info,
            done: self.state.t == cfg.horizon_steps,
        })
    }
}

/// Rates of users that receive any service.
fn served_rates(rates: &[f64]) -> Vec<f64> {
    rates.iter().copied().filter(|r| *r > 0.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, WorldConfig};
    use approx::assert_abs_diff_eq;

    fn scenario() -> Scenario {
        generate_scenario(&WorldConfig::default()).unwrap()
    }

    fn env() -> Env {
        Env::new(&scenario(), ChannelParams::default(), EnvConfig::default()).unwrap()
    }

    #[test]
    fn assemble_examples() {
        let c = RewardComponents {
            coverage: 1.0,
            ee: 0.5,
            load: 1.0,
            rate: 0.4,
            pf: 0.0,
            penalty: 0.0,
        };
        let w = RewardWeights {
            coverage: 1.0,
            ee: 1.0,
            load: 1.0,
            rate: 1.0,
            penalty: 1.0,
            pf: 1.0,
        };
        assert_abs_diff_eq!(assemble_reward(&c, &w, Objective::Mmf), 2.9, epsilon = 1e-15);
        assert_eq!(assemble_reward(&RewardComponents::default(), &w, Objective::Mmf), 0.0);
        let pf = RewardComponents { pf: 0.25, ..c };
        assert_abs_diff_eq!(assemble_reward(&pf, &w, Objective::Pf), 1.0 + 0.5 + 0.25, epsilon = 1e-15);
    }

    #[test]
    fn pf_single_user_log_term() {
        let r = 3.7e7;
        let raw: f64 = served_rates(&[r]).iter().map(|x| x.ln_1p()).sum();
        assert_eq!(raw, (1.0 + r).ln());
    }

    #[test]
    fn center_pose_normalizes_to_half() {
        let mut e = env();
        let (obs, gs) = e.reset(&[[500.0, 500.0, 100.0]], 1).unwrap();
        assert_eq!(obs[0].position(), [0.5, 0.5, 0.5]);
        assert_eq!(obs[0].power(), 0.5);
        assert_eq!(obs[0].boundary_margins(), [0.5, 0.5, 0.5, 0.5]);
        assert_eq!(gs.0.len(), e.global_state_dim(1));
        let hist_sum: f64 = gs.0[OBS_DIM..OBS_DIM + 16].iter().sum();
        assert_abs_diff_eq!(hist_sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reset_reports_max_rssi_loads() {
        let s = scenario();
        let mut e = Env::new(&s, ChannelParams::default(), EnvConfig::default()).unwrap();
        let poses = [[200.0, 200.0, 100.0], [800.0, 300.0, 90.0], [400.0, 850.0, 110.0]];
        let (obs, _) = e.reset(&poses, 3).unwrap();
        let powers = [channel::mw_to_dbm(150.0); 3];
        let a = network::associate_max_rssi(&poses, &powers, &s.uav_user_positions(), &ChannelParams::default()).unwrap();
        for n in 0..3 {
            assert_abs_diff_eq!(obs[n].load_fraction(), a.loads[n] as f64 / s.uav_users.len() as f64, epsilon = 1e-15);
        }
    }

    #[test]
    fn reset_is_deterministic_and_validates() {
        let mut a = env();
        let mut b = env();
        let poses = [[100.0, 100.0, 100.0], [900.0, 900.0, 80.0]];
        assert_eq!(a.reset(&poses, 9).unwrap().0, b.reset(&poses, 9).unwrap().0);
        assert!(a.reset(&[[100.0, 100.0, 50.0]], 0).is_err());
        assert!(a.reset(&[[-1.0, 100.0, 100.0]], 0).is_err());
    }

    #[test]
    fn zero_action_is_identity() {
        let mut e = env();
        let poses = [[300.0, 300.0, 100.0], [700.0, 700.0, 100.0]];
        e.reset(&poses, 0).unwrap();
        let out = e.step(&[ActionVector::ZERO; 2]).unwrap();
        assert_eq!(e.state().positions, poses.to_vec());
        assert_eq!(e.state().powers_mw, vec![150.0; 2]);
        for b in &out.breakdowns {
            assert_eq!(b.flags.collisions, 0);
            assert!(!b.flags.boundary);
        }
    }

    #[test]
    fn full_x_action_moves_five_meters() {
        let mut e = env();
        e.reset(&[[300.0, 300.0, 100.0]], 0).unwrap();
        e.step(&[ActionVector([1.0, 0.0, 0.0, 0.0])]).unwrap();
        assert_eq!(e.state().positions[0], [305.0, 300.0, 100.0]);
        // diagonal gets projected onto the speed ball
        e.step(&[ActionVector([1.0, 1.0, 1.0, 1.0])]).unwrap();
        let q = e.state().positions[0];
        assert_abs_diff_eq!((q[0] - 305.0).hypot(q[1] - 300.0), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[2], 101.0, epsilon = 1e-12);
        assert_eq!(e.state().powers_mw[0], 160.0);
    }

    #[test]
    fn close_pair_collides() {
        let mut e = env();
        e.reset(&[[300.0, 300.0, 100.0], [340.0, 300.0, 100.0]], 0).unwrap();
        let out = e.step(&[ActionVector::ZERO; 2]).unwrap();
        for b in &out.breakdowns {
            assert_eq!(b.flags.collisions, 1);
            assert!(b.components.penalty >= 1.0);
        }
    }

    #[test]
    fn penalty_examples() {
        let cfg = EnvConfig::default();
        let far = compute_penalty(&[[200.0, 200.0, 100.0], [800.0, 800.0, 100.0]], &[false, false], &[25.0, 25.0], &cfg);
        assert!(far.iter().all(|(p, _)| *p == 0.0));
        let tri = compute_penalty(
            &[[300.0, 300.0, 100.0], [310.0, 300.0, 100.0], [305.0, 308.0, 100.0]],
            &[false; 3],
            &[25.0; 3],
            &cfg,
        );
        for (p, f) in tri {
            assert_eq!(f.collisions, 2);
            assert_eq!(p, 2.0 * cfg.penalties.collision);
        }
    }

    #[test]
    fn backhaul_penalty_follows_snr() {
        let ch = ChannelParams::default();
        let gbs = [500.0, 500.0, 30.0];
        let uav = [1400.0, 500.0, 100.0];
        let snr = channel::snr_db(channel::mw_to_dbm(100.0), channel::backhaul_pathloss(gbs, uav, &ch).unwrap(), &ch, 10e6);
        for th in [0.0, snr - 0.5, snr + 0.5] {
            let cfg = EnvConfig {
                backhaul_threshold_db: th,
                ..EnvConfig::default()
            };
            let (_, f) = compute_penalty(&[uav], &[false], &[snr], &cfg)[0];
            assert_eq!(f.backhaul, snr < th);
        }
        assert!(snr > 0.0);
    }

    #[test]
    fn edge_push_clamps_and_penalizes() {
        let mut e = env();
        e.reset(&[[998.0, 500.0, 119.5]], 0).unwrap();
        let out = e.step(&[ActionVector([1.0, 0.0, 1.0, 0.0])]).unwrap();
        assert_eq!(e.state().positions[0], [1000.0, 500.0, 120.0]);
        assert!(out.info.clamped[0]);
        assert!(out.breakdowns[0].flags.boundary);
        assert_abs_diff_eq!(out.breakdowns[0].components.penalty, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn episode_ends_at_horizon() {
        let cfg = EnvConfig {
            horizon_steps: 3,
            ..EnvConfig::default()
        };
        let mut e = Env::new(&scenario(), ChannelParams::default(), cfg).unwrap();
        e.reset(&[[300.0, 300.0, 100.0]], 0).unwrap();
        assert!(!e.step(&[ActionVector::ZERO]).unwrap().done);
        assert!(!e.step(&[ActionVector::ZERO]).unwrap().done);
        assert!(e.step(&[ActionVector::ZERO]).unwrap().done);
        assert!(e.step(&[ActionVector::ZERO]).is_err());
    }

    #[test]
    fn rejects_nan_actions() {
        let mut e = env();
        e.reset(&[[300.0, 300.0, 100.0]], 0).unwrap();
        assert!(e.step(&[ActionVector([f64::NAN, 0.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn team_terms_shared_and_recombine() {
        let mut e = env();
        e.reset(&[[300.0, 300.0, 100.0], [320.0, 300.0, 100.0], [800.0, 200.0, 90.0]], 5).unwrap();
        let out = e.step(&[ActionVector([0.3, -0.2, 0.1, 0.5]); 3]).unwrap();
        let c0 = out.breakdowns[0].components;
        for b in &out.breakdowns {
            assert_eq!(b.components.coverage, c0.coverage);
            assert_eq!(b.components.ee, c0.ee);
            assert_eq!(b.components.load, c0.load);
            assert_eq!(b.components.rate, c0.rate);
            assert!((b.recombine() - b.total).abs() < 1e-12);
        }
        assert!(out.observations.iter().all(|o| o.0.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn running_min_max() {
        let mut r = RunningMinMax::default();
        assert_eq!(r.observe(5.0), 0.0);
        assert_eq!(r.observe(10.0), 1.0);
        assert_eq!(r.observe(7.5), 0.5);
        assert_eq!(r.normalize(20.0), 1.0);
    }
}
