//! Per-episode run logs and the tidy export consumed by the plotting tools.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::scenario::Point3;
use crate::metrics::EpisodeMetrics;
use crate::{Error, Result};

pub const LOG_SCHEMA_VERSION: u32 = 1;
pub const LOG_FILE: &str = "log.csv";
pub const MANIFEST_FILE: &str = "run_manifest.json";

/// One row per (seed, episode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub seed: u64,
    pub episode: usize,
    pub total_reward: f64,
    pub nee: f64,
    pub jfi_load: f64,
    pub jfi_rate: f64,
    pub coverage_pct: f64,
    pub eta_actor: f64,
    pub eta_critic: f64,
    pub rnf_triggered: bool,
    pub rnf_trigger_episode: Option<usize>,
}

impl LogRow {
    pub fn from_metrics(seed: u64, episode: usize, m: &EpisodeMetrics, eta: (f64, f64), trigger: Option<usize>) -> Self {
        Self {
            seed,
            episode,
            total_reward: m.total_reward,
            nee: m.nee,
            jfi_load: m.jfi_load_avg,
            jfi_rate: m.jfi_rate_avg,
            coverage_pct: 100.0 * m.mean_coverage,
            eta_actor: eta.0,
            eta_critic: eta.1,
            rnf_triggered: m.rnf_triggered,
            rnf_trigger_episode: trigger,
        }
    }

    /// Metric columns in export order.
    pub fn metrics(&self) -> [(&'static str, f64); 7] {
        [
            ("total_reward", self.total_reward),
            ("nee", self.nee),
            ("jfi_load", self.jfi_load),
            ("jfi_rate", self.jfi_rate),
            ("coverage_pct", self.coverage_pct),
            ("eta_actor", self.eta_actor),
            ("eta_critic", self.eta_critic),
        ]
    }
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Describes a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub method: String,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub reference_mean_ee: f64,
    /// Starting poses per seed, in seed order.
    pub initial_poses: Vec<Vec<Point3>>,
    pub rnf_trigger_episodes: Vec<Option<usize>>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed_{seed}"))
}

/// Long-format row: one metric value per (method, seed, episode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub method: String,
    pub seed: u64,
    pub episode: usize,
    pub metric: String,
    pub value: f64,
}

/// Per-(method, seed) means over the last `tail` episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub seed: u64,
    pub episodes_used: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRow {
    pub method: String,
    pub seed: u64,
    pub trigger_episode: usize,
}

/// Every run directory at or directly below `root` (one holding a manifest).
pub fn discover_runs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub const TAIL_EPISODES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportSummary {
    pub runs: usize,
    pub tidy_rows: usize,
}

/// Writes `runs_tidy.csv`, `final_summary.csv` and `rnf_triggers.csv`.
pub fn export_figures(runs_root: &Path, out: &Path) -> Result<ExportSummary> {
    let runs = discover_runs(runs_root)?;
    if runs.is_empty() {
        return Err(Error::Config(format!("no run directories under {}", runs_root.display())));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut tidy = csv::Writer::from_path(out.join("runs_tidy.csv"))?;
    let mut summary = csv::Writer::from_path(out.join("final_summary.csv"))?;
    let mut triggers = csv::Writer::from_path(out.join("rnf_triggers.csv"))?;
    let mut seen = std::collections::BTreeSet::new();
    let mut n_tidy = 0;
    for dir in &runs {
        let manifest = RunManifest::load(dir)?;
        for &seed in &manifest.seeds {
            if !seen.insert((manifest.method.clone(), seed)) {
                return Err(Error::Config(format!(
                    "duplicate run for method {} seed {seed}",
                    manifest.method
                )));
            }
            let rows = read_log(&seed_dir(dir, seed).join(LOG_FILE))?;
            for r in &rows {
                for (metric, value) in r.metrics() {
                    tidy.serialize(TidyRow {
                        method: manifest.method.clone(),
                        seed,
                        episode: r.episode,
                        metric: metric.into(),
                        value,
                    })?;
                    n_tidy += 1;
                }
            }
            let tail = &rows[rows.len().saturating_sub(TAIL_EPISODES)..];
            if let Some(first) = tail.first() {
                for (k, (metric, _)) in first.metrics().iter().enumerate() {
                    let xs: Vec<f64> = tail.iter().map(|r| r.metrics()[k].1).collect();
                    summary.serialize(SummaryRow {
                        method: manifest.method.clone(),
                        seed,
                        episodes_used: xs.len(),
                        metric: (*metric).into(),
                        mean: crate::metrics::mean(&xs),
                        std: crate::metrics::std_dev(&xs),
                    })?;
                }
            }
            if let Some(e) = rows.iter().find_map(|r| r.rnf_trigger_episode) {
                triggers.serialize(TriggerRow {
                    method: manifest.method.clone(),
                    seed,
                    trigger_episode: e,
                })?;
            }
        }
    }
    for (w, name) in [(&mut tidy, "runs_tidy.csv"), (&mut summary, "final_summary.csv"), (&mut triggers, "rnf_triggers.csv")] {
        w.flush().map_err(|e| Error::io(out.join(name), e))?;
    }
    Ok(ExportSummary {
        runs: runs.len(),
        tidy_rows: n_tidy,
    })
}
