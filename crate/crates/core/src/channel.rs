//! Propagation models: the elevation-dependent probabilistic LoS/NLoS
//! air-to-ground loss, the shadowed log-distance terrestrial loss, and SNR.
//!
//! All losses are in dB, powers in dBm, angles in degrees.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::scenario::{Point2, Point3};
use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    pub s_curve_a: f64,
    pub s_curve_b: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
    pub carrier_hz: f64,
    pub lightspeed: f64,
    /// Terrestrial path-loss exponent.
    pub pathloss_exponent: f64,
    pub shadow_sigma_db: f64,
    pub antenna_gain_tx_db: f64,
    pub antenna_gain_rx_db: f64,
    pub noise_density_dbm_hz: f64,
    /// Per-UAV FDMA sub-band.
    pub bandwidth_hz: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            s_curve_a: 9.61,
            s_curve_b: 0.16,
            eta_los_db: 1.0,
            eta_nlos_db: 20.0,
            carrier_hz: 2.4e9,
            lightspeed: SPEED_OF_LIGHT,
            pathloss_exponent: 3.5,
            shadow_sigma_db: 8.0,
            antenna_gain_tx_db: 0.0,
            antenna_gain_rx_db: 0.0,
            noise_density_dbm_hz: -174.0,
            bandwidth_hz: 10e6,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.s_curve_a,
            self.s_curve_b,
            self.eta_los_db,
            self.eta_nlos_db,
            self.carrier_hz,
            self.lightspeed,
            self.pathloss_exponent,
            self.shadow_sigma_db,
            self.antenna_gain_tx_db,
            self.antenna_gain_rx_db,
            self.noise_density_dbm_hz,
            self.bandwidth_hz,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("channel params must be finite".into()));
        }
        if self.s_curve_b <= 0.0 {
            return Err(Error::Config("s_curve_b must be positive".into()));
        }
        if !(self.eta_nlos_db >= self.eta_los_db && self.eta_los_db >= 0.0) {
            return Err(Error::Config("need eta_nlos >= eta_los >= 0".into()));
        }
        if self.carrier_hz <= 0.0 || self.lightspeed <= 0.0 || self.bandwidth_hz <= 0.0 {
            return Err(Error::Config(
                "carrier, lightspeed and bandwidth must be positive".into(),
            ));
        }
        if !(3.0..=4.5).contains(&self.pathloss_exponent) {
            return Err(Error::Config("pathloss_exponent must lie in [3, 4.5]".into()));
        }
        if self.shadow_sigma_db < 0.0 {
            return Err(Error::Config("shadow_sigma_db must be non-negative".into()));
        }
        Ok(())
    }

    /// `20 log10(4π f_c / c)`: free-space loss at one meter.
    pub fn fspl_at_one_meter_db(&self) -> f64 {
        20.0 * (4.0 * PI * self.carrier_hz / self.lightspeed).log10()
    }

    pub fn noise_power_dbm(&self, bandwidth_hz: f64) -> f64 {
        self.noise_density_dbm_hz + 10.0 * bandwidth_hz.log10()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

pub fn distance_3d(uav: Point3, user: Point2) -> f64 {
    let dx = uav[0] - user[0];
    let dy = uav[1] - user[1];
    (dx * dx + dy * dy + uav[2] * uav[2]).sqrt()
}

fn checked_distance(uav: Point3, user: Point2) -> Result<f64> {
    let d = distance_3d(uav, user);
    if d > 0.0 && d.is_finite() {
        Ok(d)
    } else {
        Err(Error::Domain(format!(
            "zero or non-finite link distance between {uav:?} and {user:?}"
        )))
    }
}

/// Elevation of the aerial end seen from a ground-level user, in degrees.
pub fn elevation_angle(uav: Point3, user: Point2) -> Result<f64> {
    let d = checked_distance(uav, user)?;
    Ok((uav[2] / d).asin().to_degrees())
}

/// Sigmoid LoS probability `1 / (1 + a exp(-b (θ - a)))`.
pub fn los_probability(theta_deg: f64, params: &ChannelParams) -> f64 {
    let a = params.s_curve_a;
    1.0 / (1.0 + a * (-params.s_curve_b * (theta_deg - a)).exp())
}

/// Free-space loss plus excess loss for one propagation state.
pub fn state_pathloss_db(distance: f64, eta_db: f64, params: &ChannelParams) -> f64 {
    20.0 * distance.log10()
        + 20.0 * params.carrier_hz.log10()
        + 20.0 * (4.0 * PI / params.lightspeed).log10()
        + eta_db
}

/// LoS-probability-weighted A2G loss.
pub fn a2g_pathloss(uav: Point3, user: Point2, params: &ChannelParams) -> Result<f64> {
    let d = checked_distance(uav, user)?;
    let theta = (uav[2] / d).asin().to_degrees();
    let p_los = los_probability(theta, params);
    let los = state_pathloss_db(d, params.eta_los_db, params);
    let nlos = state_pathloss_db(d, params.eta_nlos_db, params);
    Ok(p_los * los + (1.0 - p_los) * nlos)
}

/// Log-distance terrestrial loss with a caller-supplied shadowing draw.
pub fn gbs_pathloss(
    gbs: Point3,
    user: Point2,
    shadow_db: f64,
    params: &ChannelParams,
) -> Result<f64> {
    let d = checked_distance(gbs, user)?;
    Ok(params.fspl_at_one_meter_db() + 10.0 * params.pathloss_exponent * d.log10() + shadow_db)
}

/// Pure-LoS A2G loss between the GBS mast and a UAV (the backhaul link).
pub fn backhaul_pathloss(gbs: Point3, uav: Point3, params: &ChannelParams) -> Result<f64> {
    let dx = uav[0] - gbs[0];
    let dy = uav[1] - gbs[1];
    let dz = uav[2] - gbs[2];
    let d = (dx * dx + dy * dy + dz * dz).sqrt();
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain("GBS and UAV coincide".into()));
    }
    Ok(state_pathloss_db(d, params.eta_los_db, params))
}

pub fn snr_db(tx_power_dbm: f64, pathloss_db: f64, params: &ChannelParams, bandwidth_hz: f64) -> f64 {
    tx_power_dbm + params.antenna_gain_tx_db + params.antenna_gain_rx_db
        - pathloss_db
        - params.noise_power_dbm(bandwidth_hz)
}

pub fn snr_linear(
    tx_power_dbm: f64,
    pathloss_db: f64,
    params: &ChannelParams,
    bandwidth_hz: f64,
) -> f64 {
    db_to_linear(snr_db(tx_power_dbm, pathloss_db, params, bandwidth_hz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn urban() -> ChannelParams {
        ChannelParams::default()
    }

    #[test]
    fn elevation_examples() {
        assert_abs_diff_eq!(elevation_angle([0.0, 0.0, 100.0], [0.0, 0.0]).unwrap(), 90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(elevation_angle([100.0, 0.0, 100.0], [0.0, 0.0]).unwrap(), 45.0, epsilon = 1e-12);
        assert_abs_diff_eq!(elevation_angle([0.0, 0.0, 50.0], [86.6025, 0.0]).unwrap(), 30.0, epsilon = 1e-4);
        assert!(matches!(elevation_angle([1.0, 2.0, 0.0], [1.0, 2.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn los_probability_examples() {
        let p = urban();
        assert_abs_diff_eq!(los_probability(9.61, &p), 1.0 / 10.61, epsilon = 1e-15);
        assert_abs_diff_eq!(los_probability(9.61, &p), 0.09425, epsilon = 1e-4);
        // a exp(-b(90-a)) = 9.61 e^{-12.8624}
        let at90 = 1.0 / (1.0 + 9.61 * (-0.16f64 * (90.0 - 9.61)).exp());
        assert_abs_diff_eq!(los_probability(90.0, &p), at90, epsilon = 1e-15);
        assert_abs_diff_eq!(at90, 0.99997, epsilon = 1e-5);
        assert_abs_diff_eq!(los_probability(0.0, &p), 0.02187, epsilon = 1e-5);
    }

    #[test]
    fn fspl_core_at_one_km() {
        let p = ChannelParams {
            eta_los_db: 0.0,
            eta_nlos_db: 0.0,
            ..urban()
        };
        assert_abs_diff_eq!(state_pathloss_db(1000.0, 0.0, &p), 100.05, epsilon = 0.01);
        // equal excess losses collapse the LoS weighting
        let flat = ChannelParams {
            eta_los_db: 7.0,
            eta_nlos_db: 7.0,
            ..urban()
        };
        for uav in [[0.0, 0.0, 80.0], [600.0, 100.0, 120.0]] {
            let d = distance_3d(uav, [0.0, 0.0]);
            assert_abs_diff_eq!(
                a2g_pathloss(uav, [0.0, 0.0], &flat).unwrap(),
                state_pathloss_db(d, 0.0, &flat) + 7.0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn overhead_a2g_composes_oracles() {
        let p = urban();
        let pl = a2g_pathloss([0.0, 0.0, 100.0], [0.0, 0.0], &p).unwrap();
        let fspl100 = 20.0 * 100f64.log10() + p.fspl_at_one_meter_db();
        let plos = los_probability(90.0, &p);
        assert_abs_diff_eq!(pl, fspl100 + plos * 1.0 + (1.0 - plos) * 20.0, epsilon = 1e-9);
    }

    #[test]
    fn dimensional_sanity_at_one_meter() {
        let p = urban();
        assert_abs_diff_eq!(
            state_pathloss_db(1.0, 0.0, &p),
            20.0 * (p.carrier_hz * 4.0 * PI / p.lightspeed).log10(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn gbs_pathloss_examples() {
        let p = urban();
        let gbs = [500.0, 500.0, 30.0];
        let horiz = (100.0f64 * 100.0 - 30.0 * 30.0).sqrt();
        let user = [500.0 + horiz, 500.0];
        let base = gbs_pathloss(gbs, user, 0.0, &p).unwrap();
        assert_abs_diff_eq!(base, 110.05, epsilon = 0.01);
        assert_abs_diff_eq!(gbs_pathloss(gbs, user, 8.0, &p).unwrap() - base, 8.0, epsilon = 1e-12);
        // doubling the 3D distance
        let horiz2 = (200.0f64 * 200.0 - 30.0 * 30.0).sqrt();
        let far = gbs_pathloss(gbs, [500.0 + horiz2, 500.0], 0.0, &p).unwrap();
        assert_abs_diff_eq!(far - base, 35.0 * 2f64.log10(), epsilon = 1e-9);
        assert_abs_diff_eq!(far - base, 10.54, epsilon = 0.01);
    }

    #[test]
    fn snr_examples() {
        let p = urban();
        assert_abs_diff_eq!(p.noise_power_dbm(10e6), -104.0, epsilon = 1e-12);
        let s = snr_db(mw_to_dbm(200.0), 100.0, &p, 10e6);
        assert_abs_diff_eq!(s, 27.0, epsilon = 0.02);
        assert_abs_diff_eq!(snr_db(23.0, 100.0, &p, 10e6), 27.0, epsilon = 1e-12);
        assert_abs_diff_eq!(db_to_linear(27.0), 501.187, epsilon = 1e-3);
        assert_abs_diff_eq!(snr_db(20.0, 100.0, &p, 10e6), 24.0, epsilon = 1e-12);
        assert_eq!(snr_linear(20.0, f64::INFINITY, &p, 10e6), 0.0);
    }

    #[test]
    fn linear_snr_matches_all_linear_oracle() {
        let p = ChannelParams {
            antenna_gain_tx_db: 2.0,
            antenna_gain_rx_db: 1.5,
            ..urban()
        };
        for (p_mw, l_db) in [(100.0, 90.0), (150.0, 101.3), (200.0, 117.7)] {
            let g_lin = db_to_linear(p.antenna_gain_tx_db) * db_to_linear(p.antenna_gain_rx_db);
            let noise_mw = 10f64.powf(p.noise_density_dbm_hz / 10.0) * p.bandwidth_hz;
            let oracle = p_mw * g_lin * 10f64.powf(-l_db / 10.0) / noise_mw;
            let got = snr_linear(mw_to_dbm(p_mw), l_db, &p, p.bandwidth_hz);
            assert!(((got - oracle) / oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn defaults_validate() {
        urban().validate().unwrap();
        let bad = ChannelParams {
            eta_nlos_db: 0.5,
            ..urban()
        };
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn los_probability_monotone(t1 in 0.0f64..90.0, t2 in 0.0f64..90.0) {
                let p = ChannelParams::default();
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                prop_assert!(los_probability(lo, &p) <= los_probability(hi, &p));
                let v = los_probability(t1, &p);
                prop_assert!(v > 0.0 && v < 1.0);
            }

            #[test]
            fn a2g_increasing_in_distance(theta in 1.0f64..89.0, d1 in 10.0f64..2000.0, d2 in 10.0f64..2000.0) {
                let p = ChannelParams::default();
                let at = |d: f64| {
                    let r = theta.to_radians();
                    a2g_pathloss([d * r.cos(), 0.0, d * r.sin()], [0.0, 0.0], &p).unwrap()
                };
                if d1 < d2 {
                    prop_assert!(at(d1) < at(d2));
                }
            }

            #[test]
            fn a2g_nonincreasing_in_elevation(d in 100.0f64..2000.0, t1 in 1.0f64..89.0, t2 in 1.0f64..89.0) {
                let p = ChannelParams::default();
                let at = |t: f64| {
                    let r = t.to_radians();
                    a2g_pathloss([d * r.cos(), 0.0, d * r.sin()], [0.0, 0.0], &p).unwrap()
                };
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                prop_assert!(at(hi) <= at(lo) + 1e-9);
            }
        }
    }
}
