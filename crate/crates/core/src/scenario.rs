//! World instances: hotspot-clustered users around a central GBS.
//!
//! Users follow a Thomas-style cluster process with a fixed number of
//! parents. Parent centers are uniform over the area (kept `2σ` from the
//! edges) and every daughter is the parent plus isotropic Gaussian scatter,
//! re-drawn until it lands inside the area. The cluster nearest the GBS is
//! served terrestrially; everything else is a UAV target.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

pub type Point2 = [f64; 2];
pub type Point3 = [f64; 3];

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Side length `D` of the square service area in meters.
    pub area_side: f64,
    pub num_users: usize,
    pub num_uavs: usize,
    pub num_clusters: usize,
    /// Daughter scatter standard deviation in meters.
    pub scatter_sigma: f64,
    pub gbs_position: Point3,
    pub gbs_power_mw: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            area_side: 1000.0,
            num_users: 50,
            num_uavs: 6,
            num_clusters: 5,
            scatter_sigma: 50.0,
            gbs_position: [500.0, 500.0, 30.0],
            gbs_power_mw: 1000.0,
            seed: 42,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.area_side,
            self.scatter_sigma,
            self.gbs_position[0],
            self.gbs_position[1],
            self.gbs_position[2],
            self.gbs_power_mw,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("world config contains non-finite values".into()));
        }
        if self.area_side <= 0.0 {
            return Err(Error::Config("area_side must be positive".into()));
        }
        if self.num_clusters == 0 {
            return Err(Error::Config("num_clusters must be at least 1".into()));
        }
        if self.num_users < self.num_clusters {
            return Err(Error::Config(format!(
                "num_users ({}) must be at least num_clusters ({})",
                self.num_users, self.num_clusters
            )));
        }
        if self.num_uavs == 0 {
            return Err(Error::Config("num_uavs must be at least 1".into()));
        }
        if self.scatter_sigma <= 0.0 {
            return Err(Error::Config("scatter_sigma must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub seed: u64,
    pub config: WorldConfig,
    pub users: Vec<Point2>,
    pub centers: Vec<Point2>,
    pub gbs_users: Vec<usize>,
    pub uav_users: Vec<usize>,
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn uav_user_positions(&self) -> Vec<Point2> {
        self.uav_users.iter().map(|&i| self.users[i]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.version != SCENARIO_VERSION {
            return Err(Error::Config(format!(
                "unsupported scenario version {}",
                self.version
            )));
        }
        let d = self.config.area_side;
        for (i, u) in self.users.iter().enumerate() {
            if !(u[0].is_finite() && u[1].is_finite())
                || u[0] < 0.0
                || u[0] > d
                || u[1] < 0.0
                || u[1] > d
            {
                return Err(Error::Config(format!("user {i} lies outside the area")));
            }
        }
        let mut seen = vec![0u8; self.users.len()];
        for &i in self.gbs_users.iter().chain(&self.uav_users) {
            if i >= self.users.len() {
                return Err(Error::Config(format!("user index {i} out of range")));
            }
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::Config(
                "gbs_users and uav_users must partition the user set".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scenario: Scenario = serde_json::from_str(&text)?;
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Near-equal split of `total` items over `parts` buckets; the first
/// `total % parts` buckets get one extra.
pub fn split_counts(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|k| base + usize::from(k < extra)).collect()
}

pub fn generate_scenario(config: &WorldConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, "scenario", 0);
    let d = config.area_side;
    let sigma = config.scatter_sigma;

    let margin = (2.0 * sigma).min(d / 2.0);
    let centers: Vec<Point2> = (0..config.num_clusters)
        .map(|_| {
            [
                margin + rng.random::<f64>() * (d - 2.0 * margin),
                margin + rng.random::<f64>() * (d - 2.0 * margin),
            ]
        })
        .collect();

    let counts = split_counts(config.num_users, config.num_clusters);
    let mut users = Vec::with_capacity(config.num_users);
    let mut labels = Vec::with_capacity(config.num_users);
    for (k, (&c, &n)) in centers.iter().zip(&counts).enumerate() {
        for _ in 0..n {
            let p = loop {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                let p = [c[0] + sigma * dx, c[1] + sigma * dy];
                if (0.0..=d).contains(&p[0]) && (0.0..=d).contains(&p[1]) {
                    break p;
                }
            };
            users.push(p);
            labels.push(k);
        }
    }

    let (gbs_users, uav_users) = partition_users(&labels, &centers, config.gbs_position);
    Ok(Scenario {
        version: SCENARIO_VERSION,
        seed: config.seed,
        config: config.clone(),
        users,
        centers,
        gbs_users,
        uav_users,
    })
}

pub fn horizontal_distance(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Index of the point with the smallest horizontal distance to `target`;
/// ties go to the lowest index.
pub fn nearest_index(points: &[Point2], target: Point2) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &p) in points.iter().enumerate() {
        let dist = horizontal_distance(p, target);
        if best.is_none_or(|(_, b)| dist < b) {
            best = Some((i, dist));
        }
    }
    best.map(|(i, _)| i)
}

/// Splits users into (GBS-served, UAV-served) index sets. `memberships[m]`
/// is the cluster of user `m`; the cluster whose center is horizontally
/// nearest the GBS goes to the terrestrial tier.
///
/// # Panics
/// If `centers` is empty.
pub fn partition_users(
    memberships: &[usize],
    centers: &[Point2],
    gbs_position: Point3,
) -> (Vec<usize>, Vec<usize>) {
    let gbs_cluster = nearest_index(centers, [gbs_position[0], gbs_position[1]])
        .expect("partition_users needs at least one cluster center");
    memberships
        .iter()
        .enumerate()
        .map(|(m, &k)| (m, k == gbs_cluster))
        .fold((Vec::new(), Vec::new()), |(mut g, mut u), (m, is_gbs)| {
            if is_gbs {
                g.push(m);
            } else {
                u.push(m);
            }
            (g, u)
        })
}
