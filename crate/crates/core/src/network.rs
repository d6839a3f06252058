//! User association and congestion-aware rates.
//!
//! Every UAV owns an orthogonal sub-band (no inter-UAV interference), and
//! users attached to the same UAV split its airtime equally.

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams};
use crate::scenario::{Point2, Point3};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationState {
    /// Serving UAV for each UAV-target user.
    pub serving: Vec<Option<usize>>,
    /// Users attached to each UAV (`K_n`).
    pub loads: Vec<usize>,
}

impl AssociationState {
    pub fn num_uavs(&self) -> usize {
        self.loads.len()
    }

    /// Binary `N x M_UAV` association matrix.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0u8; self.serving.len()]; self.loads.len()];
        for (m, s) in self.serving.iter().enumerate() {
            if let Some(n) = *s {
                a[n][m] = 1;
            }
        }
        a
    }

    pub fn total_served(&self) -> usize {
        self.loads.iter().sum()
    }
}

/// A2G path loss from every UAV to every user, `[uav][user]`.
pub fn pathloss_table(
    uav_positions: &[Point3],
    users: &[Point2],
    params: &ChannelParams,
) -> Result<Vec<Vec<f64>>> {
    uav_positions
        .iter()
        .map(|&q| {
            users
                .iter()
                .map(|&x| channel::a2g_pathloss(q, x, params))
                .collect()
        })
        .collect()
}

fn associate_from_table(pathloss: &[Vec<f64>], tx_powers_dbm: &[f64], params: &ChannelParams, num_users: usize) -> AssociationState {
    let n_uav = pathloss.len();
    let gains = params.antenna_gain_tx_db + params.antenna_gain_rx_db;
    let mut serving = Vec::with_capacity(num_users);
    let mut loads = vec![0usize; n_uav];
    for m in 0..num_users {
        let mut best: Option<(usize, f64)> = None;
        for n in 0..n_uav {
            let rssi = tx_powers_dbm[n] + gains - pathloss[n][m];
            if best.is_none_or(|(_, b)| rssi > b) {
                best = Some((n, rssi));
            }
        }
        if let Some((n, _)) = best {
            loads[n] += 1;
        }
        serving.push(best.map(|(n, _)| n));
    }
    AssociationState { serving, loads }
}

/// Attaches every user to the UAV with the strongest received power; ties
/// go to the lowest UAV index.
pub fn associate_max_rssi(
    uav_positions: &[Point3],
    tx_powers_dbm: &[f64],
    users: &[Point2],
    params: &ChannelParams,
) -> Result<AssociationState> {
    let table = pathloss_table(uav_positions, users, params)?;
    Ok(associate_from_table(&table, tx_powers_dbm, params, users.len()))
}

/// SNR (dB) on each user's serving link; `None` for unassociated users.
pub fn serving_snr_db(
    assoc: &AssociationState,
    uav_positions: &[Point3],
    tx_powers_dbm: &[f64],
    users: &[Point2],
    params: &ChannelParams,
    bandwidth_hz: f64,
) -> Result<Vec<Option<f64>>> {
    assoc
        .serving
        .iter()
        .zip(users)
        .map(|(s, &x)| {
            s.map(|n| {
                channel::a2g_pathloss(uav_positions[n], x, params)
                    .map(|pl| channel::snr_db(tx_powers_dbm[n], pl, params, bandwidth_hz))
            })
            .transpose()
        })
        .collect()
}

/// `R_m = (B / K_n) log2(1 + snr)` for the serving UAV `n`.
pub fn rates_from_snr(assoc: &AssociationState, snr_db: &[Option<f64>], bandwidth_hz: f64) -> Vec<f64> {
    assoc
        .serving
        .iter()
        .zip(snr_db)
        .map(|(s, snr)| match (s, snr) {
            (Some(n), Some(g)) => {
                let k = assoc.loads[*n] as f64;
                bandwidth_hz / k * (1.0 + channel::db_to_linear(*g)).log2()
            }
            _ => 0.0,
        })
        .collect()
}

pub fn user_rates(
    assoc: &AssociationState,
    uav_positions: &[Point3],
    tx_powers_dbm: &[f64],
    users: &[Point2],
    params: &ChannelParams,
    bandwidth_hz: f64,
) -> Result<Vec<f64>> {
    let snr = serving_snr_db(assoc, uav_positions, tx_powers_dbm, users, params, bandwidth_hz)?;
    Ok(rates_from_snr(assoc, &snr, bandwidth_hz))
}

/// Covered iff the serving-link SNR is at least `threshold_db`.
pub fn coverage_mask(snr_db: &[Option<f64>], threshold_db: f64) -> Vec<bool> {
    snr_db
        .iter()
        .map(|s| s.is_some_and(|g| g >= threshold_db))
        .collect()
}

/// Everything the environment needs about the access links in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSnapshot {
    pub assoc: AssociationState,
    pub snr_db: Vec<Option<f64>>,
    pub rates: Vec<f64>,
    pub covered: Vec<bool>,
}

pub fn evaluate_links(
    uav_positions: &[Point3],
    tx_powers_dbm: &[f64],
    users: &[Point2],
    params: &ChannelParams,
    coverage_threshold_db: f64,
) -> Result<LinkSnapshot> {
    let table = pathloss_table(uav_positions, users, params)?;
    let assoc = associate_from_table(&table, tx_powers_dbm, params, users.len());
    let bw = params.bandwidth_hz;
    let snr_db: Vec<Option<f64>> = assoc
        .serving
        .iter()
        .enumerate()
        .map(|(m, s)| s.map(|n| channel::snr_db(tx_powers_dbm[n], table[n][m], params, bw)))
        .collect();
    let rates = rates_from_snr(&assoc, &snr_db, bw);
    let covered = coverage_mask(&snr_db, coverage_threshold_db);
    Ok(LinkSnapshot {
        assoc,
        snr_db,
        rates,
        covered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::mw_to_dbm;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn p() -> ChannelParams {
        ChannelParams::default()
    }

    #[test]
    fn single_uav_takes_everyone() {
        let users = [[0.0, 0.0], [300.0, 10.0], [900.0, 900.0]];
        let a = associate_max_rssi(&[[500.0, 500.0, 100.0]], &[20.0], &users, &p()).unwrap();
        assert_eq!(a.loads, vec![3]);
        assert!(a.serving.iter().all(|s| *s == Some(0)));
    }

    #[test]
    fn nearer_uav_wins() {
        let uavs = [[0.0, 0.0, 100.0], [800.0, 0.0, 100.0]];
        let user = [700.0, 0.0];
        let pl0 = channel::a2g_pathloss(uavs[0], user, &p()).unwrap();
        let pl1 = channel::a2g_pathloss(uavs[1], user, &p()).unwrap();
        assert!(pl1 < pl0);
        let a = associate_max_rssi(&uavs, &[20.0, 20.0], &[user], &p()).unwrap();
        assert_eq!(a.serving, vec![Some(1)]);
        assert_eq!(a.matrix(), vec![vec![0], vec![1]]);
    }

    #[test]
    fn symmetric_tie_goes_to_lower_index() {
        let uavs = [[400.0, 500.0, 100.0], [600.0, 500.0, 100.0]];
        let a = associate_max_rssi(&uavs, &[20.0, 20.0], &[[500.0, 500.0]], &p()).unwrap();
        assert_eq!(a.serving, vec![Some(0)]);
    }

    #[test]
    fn rate_from_snr_example() {
        let a = AssociationState {
            serving: vec![Some(0)],
            loads: vec![1],
        };
        let snr = 10.0 * 501.2f64.log10();
        let r = rates_from_snr(&a, &[Some(snr)], 10e6);
        let expected = 10e6 * 502.2f64.log2();
        assert_relative_eq!(r[0], expected, max_relative = 1e-12);
        assert_relative_eq!(r[0], 89.72e6, max_relative = 1e-3);
    }

    #[test]
    fn co_located_user_halves_rates() {
        let uav = [[200.0, 200.0, 100.0]];
        let one = [[250.0, 260.0]];
        let two = [[250.0, 260.0], [250.0, 260.0]];
        let r1 = user_rates(
            &associate_max_rssi(&uav, &[21.0], &one, &p()).unwrap(),
            &uav,
            &[21.0],
            &one,
            &p(),
            10e6,
        )
        .unwrap();
        let r2 = user_rates(
            &associate_max_rssi(&uav, &[21.0], &two, &p()).unwrap(),
            &uav,
            &[21.0],
            &two,
            &p(),
            10e6,
        )
        .unwrap();
        assert_eq!(r2[0], r1[0] / 2.0);
        assert_eq!(r2[1], r1[0] / 2.0);
    }

    #[test]
    fn zero_linear_snr_gives_zero_rate() {
        let a = AssociationState {
            serving: vec![Some(0), None],
            loads: vec![1],
        };
        let r = rates_from_snr(&a, &[Some(f64::NEG_INFINITY), None], 10e6);
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn coverage_threshold_semantics() {
        assert_eq!(coverage_mask(&[Some(27.0); 3], 0.0), vec![true; 3]);
        assert_eq!(
            coverage_mask(&[Some(0.0), Some(-1e-12), None], 0.0),
            vec![true, false, false]
        );
    }

    #[test]
    fn coverage_mask_matches_exhaustive_scan() {
        let mut r = rng::stream(11, "test-coverage", 0);
        let uavs: Vec<Point3> = (0..6)
            .map(|_| [r.random::<f64>() * 1000.0, r.random::<f64>() * 1000.0, 80.0 + 40.0 * r.random::<f64>()])
            .collect();
        let users: Vec<Point2> = (0..40)
            .map(|_| [r.random::<f64>() * 1000.0, r.random::<f64>() * 1000.0])
            .collect();
        let powers: Vec<f64> = (0..6).map(|_| mw_to_dbm(100.0 + 100.0 * r.random::<f64>())).collect();
        // a tight threshold so some users fail
        let threshold = 28.0;
        let snap = evaluate_links(&uavs, &powers, &users, &p(), threshold).unwrap();
        let noise = p().noise_power_dbm(p().bandwidth_hz);
        for (m, &x) in users.iter().enumerate() {
            // brute force: best RSSI over all UAVs, then its SNR
            let mut best = f64::NEG_INFINITY;
            let mut best_snr = 0.0;
            for n in 0..6 {
                let pl = channel::a2g_pathloss(uavs[n], x, &p()).unwrap();
                let rssi = powers[n] - pl;
                if rssi > best {
                    best = rssi;
                    best_snr = rssi - noise;
                }
            }
            assert_eq!(snap.covered[m], best_snr >= threshold, "user {m}");
        }
        assert!(snap.covered.iter().any(|c| *c));
        assert!(snap.covered.iter().any(|c| !*c));
        // the snapshot agrees with the standalone operations
        let assoc = associate_max_rssi(&uavs, &powers, &users, &p()).unwrap();
        assert_eq!(assoc, snap.assoc);
        let rates = user_rates(&assoc, &uavs, &powers, &users, &p(), p().bandwidth_hz).unwrap();
        assert_eq!(rates, snap.rates);
    }

    #[test]
    fn permuting_uavs_permutes_rows() {
        let uavs = [[100.0, 100.0, 90.0], [700.0, 300.0, 110.0], [400.0, 800.0, 100.0]];
        let powers = [20.0, 22.0, 21.0];
        let users: Vec<Point2> = (0..25).map(|i| [(i * 37 % 1000) as f64, (i * 91 % 1000) as f64]).collect();
        let a = associate_max_rssi(&uavs, &powers, &users, &p()).unwrap();
        let perm = [2, 0, 1];
        let pu: Vec<Point3> = perm.iter().map(|&i| uavs[i]).collect();
        let pp: Vec<f64> = perm.iter().map(|&i| powers[i]).collect();
        let b = associate_max_rssi(&pu, &pp, &users, &p()).unwrap();
        let (ma, mb) = (a.matrix(), b.matrix());
        for (row, &src) in perm.iter().enumerate() {
            assert_eq!(mb[row], ma[src]);
        }
    }

    #[test]
    fn congestion_monotonicity() {
        let uav = [[500.0, 500.0, 100.0]];
        let mut users = vec![[520.0, 480.0]];
        let mut prev = f64::INFINITY;
        for _ in 0..5 {
            let snap = evaluate_links(&uav, &[20.0], &users, &p(), 0.0).unwrap();
            assert!(snap.rates[0] < prev);
            assert!(snap.rates.iter().all(|r| r.is_finite() && *r >= 0.0));
            prev = snap.rates[0];
            users.push([100.0, 900.0]);
        }
    }
}
