//! GBS-aware initial placement.
//!
//! All users are clustered into `N + 1` groups (K-Means++ seeding, then
//! Lloyd iterations). The centroid nearest the GBS is the terrestrial zone
//! and is dropped; the remaining `N` centroids become the UAVs' starting
//! points at a fixed cruising altitude.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::scenario::{horizontal_distance, nearest_index, Point2, Point3};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase1Config {
    pub init_altitude: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Independent seeding restarts; the lowest WCSS wins.
    pub restarts: usize,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Self {
            init_altitude: 100.0,
            tol: 1e-6,
            max_iters: 300,
            restarts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub centroids: Vec<Point2>,
    pub assignments: Vec<usize>,
    pub wcss: f64,
    /// WCSS after every assignment pass, in order.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
    pub discarded_index: Option<usize>,
}

fn sq_dist(a: Point2, b: Point2) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn count_distinct(points: &[Point2]) -> usize {
    let mut keys: Vec<(u64, u64)> = points
        .iter()
        .map(|p| (p[0].to_bits(), p[1].to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// K-Means++ seeding: the first centroid is uniform over the points, each
/// later one is drawn with probability proportional to the squared distance
/// to its nearest already-chosen centroid.
pub fn kmeanspp_seed(points: &[Point2], k: usize, rng: &mut Rng) -> Result<Vec<Point2>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let distinct = count_distinct(points);
    if k > distinct {
        return Err(Error::Config(format!(
            "cannot seed {k} centroids from {distinct} distinct points"
        )));
    }
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut nearest: Vec<f64> = points.iter().map(|&p| sq_dist(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in nearest.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
        }
        // `total > 0` because fewer than `distinct` centroids are chosen.
        let c = points[pick.expect("positive seeding mass")];
        centroids.push(c);
        for (d, &p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    Ok(centroids)
}

fn assign(points: &[Point2], centroids: &[Point2], assignments: &mut [usize]) -> f64 {
    let mut wcss = 0.0;
    for (a, &p) in assignments.iter_mut().zip(points) {
        let mut best = (0, f64::INFINITY);
        for (k, &c) in centroids.iter().enumerate() {
            let d = sq_dist(p, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        *a = best.0;
        wcss += best.1;
    }
    wcss
}

pub fn wcss(points: &[Point2], centroids: &[Point2], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(&p, &k)| sq_dist(p, centroids[k]))
        .sum()
}

/// Lloyd iterations from the given centroids until the largest centroid
/// shift drops below `tol` or `max_iters` passes are spent. A centroid that
/// loses all its points jumps to the point farthest from its own centroid.
pub fn lloyd_refine(
    points: &[Point2],
    init_centroids: &[Point2],
    max_iters: usize,
    tol: f64,
) -> Result<ClusteringResult> {
    if init_centroids.is_empty() {
        return Err(Error::Config("need at least one centroid".into()));
    }
    if init_centroids
        .iter()
        .any(|c| !(c[0].is_finite() && c[1].is_finite()))
    {
        return Err(Error::NonFinite("initial centroid".into()));
    }
    let k = init_centroids.len();
    let mut centroids = init_centroids.to_vec();
    let mut assignments = vec![0usize; points.len()];
    let mut history = vec![assign(points, &centroids, &mut assignments)];
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (&p, &a) in points.iter().zip(&assignments) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        let mut next = centroids.clone();
        for j in 0..k {
            if counts[j] > 0 {
                let n = counts[j] as f64;
                next[j] = [sums[j][0] / n, sums[j][1] / n];
            }
        }
        for j in 0..k {
            if counts[j] == 0 && !points.is_empty() {
                let far = points
                    .iter()
                    .zip(&assignments)
                    .enumerate()
                    .map(|(i, (&p, &a))| (i, sq_dist(p, next[a])))
                    .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b })
                    .0;
                next[j] = points[far];
                counts[j] = 1;
                let old = assignments[far];
                counts[old] -= 1;
                assignments[far] = j;
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(&a, &b)| horizontal_distance(a, b))
            .fold(0.0, f64::max);
        centroids = next;
        history.push(assign(points, &centroids, &mut assignments));
        if shift < tol {
            break;
        }
    }

    let total = wcss(points, &centroids, &assignments);
    Ok(ClusteringResult {
        centroids,
        assignments,
        wcss: total,
        wcss_history: history,
        iterations,
        discarded_index: None,
    })
}

/// Best-of-`restarts` K-Means++ / Lloyd clustering by final WCSS.
pub fn cluster(points: &[Point2], k: usize, config: &Phase1Config, rng: &mut Rng) -> Result<ClusteringResult> {
    let mut best: Option<ClusteringResult> = None;
    for _ in 0..config.restarts.max(1) {
        let seeds = kmeanspp_seed(points, k, rng)?;
        let r = lloyd_refine(points, &seeds, config.max_iters, config.tol)?;
        if best.as_ref().is_none_or(|b| r.wcss < b.wcss) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Drops the centroid horizontally nearest the GBS (ties: lowest index) and
/// lifts the rest, in ascending centroid order, to `init_altitude`.
pub fn gbs_filter_assign(result: &mut ClusteringResult, gbs_position: Point3, init_altitude: f64) -> Vec<Point3> {
    let drop = nearest_index(&result.centroids, [gbs_position[0], gbs_position[1]])
        .expect("clustering result has centroids");
    result.discarded_index = Some(drop);
    result
        .centroids
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != drop)
        .map(|(_, c)| [c[0], c[1], init_altitude])
        .collect()
}

/// Full first stage: cluster every user into `num_uavs + 1` groups and
/// return the UAV starting poses.
pub fn phase1_poses(
    users: &[Point2],
    num_uavs: usize,
    gbs_position: Point3,
    config: &Phase1Config,
    rng: &mut Rng,
) -> Result<(Vec<Point3>, ClusteringResult)> {
    let mut result = cluster(users, num_uavs + 1, config, rng)?;
    let poses = gbs_filter_assign(&mut result, gbs_position, config.init_altitude);
    Ok((poses, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    fn blobs(r: &mut Rng, centers: &[Point2], per: usize, sd: f64) -> Vec<Point2> {
        let n = Normal::new(0.0, sd).unwrap();
        centers
            .iter()
            .flat_map(|c| {
                (0..per)
                    .map(|_| [c[0] + n.sample(r), c[1] + n.sample(r)])
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn seeding_exhausts_points() {
        let pts = [[0.0, 0.0], [1.0, 5.0], [9.0, 2.0], [4.0, 4.0]];
        let mut r = rng::stream(1, "t", 0);
        let mut got = kmeanspp_seed(&pts, 4, &mut r).unwrap();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = pts.to_vec();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn seeding_rejects_too_many_centroids() {
        let pts = [[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]];
        let mut r = rng::stream(1, "t", 0);
        assert!(kmeanspp_seed(&pts, 3, &mut r).is_err());
        assert!(kmeanspp_seed(&pts, 2, &mut r).is_ok());
    }

    #[test]
    fn single_seed_is_uniform() {
        let pts: Vec<Point2> = (0..4).map(|i| [i as f64, 0.0]).collect();
        let mut r = rng::stream(2, "t", 0);
        let mut counts = [0usize; 4];
        for _ in 0..8000 {
            let c = kmeanspp_seed(&pts, 1, &mut r).unwrap()[0];
            counts[c[0] as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 2000.0).abs() < 200.0, "{counts:?}");
        }
    }

    #[test]
    fn two_blobs_get_one_seed_each() {
        let mut r = rng::stream(3, "blobs", 0);
        let pts = blobs(&mut r, &[[100.0, 100.0], [900.0, 900.0]], 25, 5.0);
        let mut hits = 0;
        for trial in 0..1000 {
            let mut s = rng::stream(4, "seed", trial);
            let c = kmeanspp_seed(&pts, 2, &mut s).unwrap();
            let side = |p: Point2| p[0] > 500.0;
            if side(c[0]) != side(c[1]) {
                hits += 1;
            }
        }
        assert!(hits >= 990, "{hits}");
    }

    #[test]
    fn lloyd_recovers_blob_means() {
        let mut r = rng::stream(5, "blobs", 0);
        let pts = blobs(&mut r, &[[200.0, 300.0], [800.0, 700.0]], 40, 10.0);
        let mean = |s: &[Point2]| {
            let n = s.len() as f64;
            [s.iter().map(|p| p[0]).sum::<f64>() / n, s.iter().map(|p| p[1]).sum::<f64>() / n]
        };
        let (m0, m1) = (mean(&pts[..40]), mean(&pts[40..]));
        let res = lloyd_refine(&pts, &[pts[0], pts[79]], 300, 1e-6).unwrap();
        assert!(horizontal_distance(res.centroids[0], m0) < 1e-6);
        assert!(horizontal_distance(res.centroids[1], m1) < 1e-6);
        assert_abs_diff_eq!(res.wcss, wcss(&pts, &res.centroids, &res.assignments), epsilon = 1e-9);
    }

    #[test]
    fn fixed_point_has_zero_wcss() {
        let pts = [[1.0, 1.0], [5.0, 5.0], [1.0, 1.0], [9.0, 0.0]];
        let init = [[1.0, 1.0], [5.0, 5.0], [9.0, 0.0]];
        let res = lloyd_refine(&pts, &init, 300, 1e-6).unwrap();
        assert_eq!(res.centroids, init.to_vec());
        assert_eq!(res.wcss, 0.0);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn wcss_never_increases() {
        let cfg = crate::scenario::WorldConfig::default();
        let s = crate::scenario::generate_scenario(&cfg).unwrap();
        let mut r = rng::stream(6, "t", 0);
        let seeds = kmeanspp_seed(&s.users, 7, &mut r).unwrap();
        let res = lloyd_refine(&s.users, &seeds, 300, 1e-6).unwrap();
        assert!(res.wcss_history.len() >= 2);
        for w in res.wcss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", res.wcss_history);
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]];
        // centroid 1 starts far away and captures nothing
        let res = lloyd_refine(&pts, &[[0.0, 0.0], [1000.0, 1000.0]], 50, 1e-9).unwrap();
        assert!(res.assignments.contains(&1));
        for w in res.wcss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    fn result_with(centroids: Vec<Point2>) -> ClusteringResult {
        ClusteringResult {
            centroids,
            assignments: vec![],
            wcss: 0.0,
            wcss_history: vec![],
            iterations: 0,
            discarded_index: None,
        }
    }

    #[test]
    fn centroid_at_gbs_is_dropped() {
        let mut r = result_with(vec![[100.0, 100.0], [500.0, 500.0], [900.0, 100.0]]);
        let poses = gbs_filter_assign(&mut r, [500.0, 500.0, 30.0], 100.0);
        assert_eq!(r.discarded_index, Some(1));
        assert_eq!(poses, vec![[100.0, 100.0, 100.0], [900.0, 100.0, 100.0]]);
    }

    #[test]
    fn seven_centroids_leave_six_peripheral_poses() {
        let gbs = [500.0, 500.0, 30.0];
        let cents: Vec<Point2> = (0..7)
            .map(|k| {
                if k == 4 {
                    [500.0, 500.0]
                } else {
                    let a = k as f64;
                    [500.0 + 400.0 * a.cos(), 500.0 + 400.0 * a.sin()]
                }
            })
            .collect();
        let mut r = result_with(cents.clone());
        let poses = gbs_filter_assign(&mut r, gbs, 100.0);
        // exhaustive scan oracle
        let mut best = 0;
        for k in 1..7 {
            if horizontal_distance(cents[k], [500.0, 500.0]) < horizontal_distance(cents[best], [500.0, 500.0]) {
                best = k;
            }
        }
        assert_eq!(r.discarded_index, Some(best));
        assert_eq!(poses.len(), 6);
        assert!(poses.iter().all(|p| p[2] == 100.0));
    }

    #[test]
    fn tie_drops_lower_index() {
        let mut r = result_with(vec![[0.0, 0.0], [400.0, 500.0], [600.0, 500.0]]);
        gbs_filter_assign(&mut r, [500.0, 500.0, 30.0], 100.0);
        assert_eq!(r.discarded_index, Some(1));
    }

    #[test]
    fn phase1_on_default_scenario() {
        let cfg = crate::scenario::WorldConfig::default();
        let s = crate::scenario::generate_scenario(&cfg).unwrap();
        let mut r = rng::stream(7, "phase1", 0);
        let (poses, res) = phase1_poses(&s.users, 6, cfg.gbs_position, &Phase1Config::default(), &mut r).unwrap();
        assert_eq!(poses.len(), 6);
        assert_eq!(res.centroids.len(), 7);
        let d = res.discarded_index.unwrap();
        for k in 0..7 {
            assert!(
                horizontal_distance(res.centroids[d], [500.0, 500.0])
                    <= horizontal_distance(res.centroids[k], [500.0, 500.0])
            );
        }
        assert!(poses.iter().all(|p| (80.0..=120.0).contains(&p[2])));
    }
}
