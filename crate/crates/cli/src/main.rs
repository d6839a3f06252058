//! `orchid` command-line entry point.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orchid::harness::{self, BaselineMethod, Checkpoint, RunConfig, TrainOptions};
use orchid::scenario::{generate_scenario, Scenario};
use orchid::Error;

#[derive(Parser)]
#[command(name = "orchid", version, about = "Two-stage multi-UAV coverage orchestration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a clustered user layout and save it as a scenario file.
    Generate {
        /// Run config (TOML or JSON); its `world` table is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every configured seed and write logs and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured episode count.
        #[arg(long)]
        episodes: Option<usize>,
        /// Override the configured seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Fire the reset controller at this episode instead of detecting a plateau.
        #[arg(long)]
        force_trigger_at: Option<usize>,
        /// Continue from a seed checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a static baseline.
    Baseline {
        /// static_random or static_kmeans
        #[arg(long)]
        method: String,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run config supplying channel, environment and seeds.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Evaluate a checkpoint with deterministic actions; prints JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        eval_seed: u64,
    },
    /// Convert run directories into tidy CSVs for plotting.
    ExportFigures {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> orchid::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn apply_overrides(cfg: &mut RunConfig, episodes: Option<usize>, seeds: Option<Vec<u64>>) -> orchid::Result<()> {
    if let Some(e) = episodes {
        cfg.episodes = e;
    }
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    cfg.validate()
}

fn run(cli: Cli) -> orchid::Result<()> {
    match cli.command {
        Command::Generate { config, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let world = orchid::scenario::WorldConfig { seed, ..cfg.world };
            let scenario = generate_scenario(&world)?;
            scenario.save(&out)?;
            eprintln!(
                "wrote {}: {} users ({} served by UAVs)",
                out.display(),
                scenario.num_users(),
                scenario.uav_users.len()
            );
        }
        Command::Train {
            config,
            out,
            episodes,
            seeds,
            force_trigger_at,
            resume,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if force_trigger_at.is_some() {
                cfg.rnf.force_trigger_at = force_trigger_at;
            }
            apply_overrides(&mut cfg, episodes, seeds)?;
            let scenario = cfg.resolve_scenario()?;
            let opts = TrainOptions { out_dir: Some(out.clone()) };
            if let Some(ck_path) = resume {
                let ck = Checkpoint::load(&ck_path)?;
                let mut seed_run = harness::SeedRun::from_checkpoint(ck, &scenario)?;
                seed_run.run(&opts, None)?;
                eprintln!("seed {} resumed to episode {}", seed_run.state.seed, seed_run.state.episodes_done);
                return Ok(());
            }
            let summary = harness::train(&cfg, &scenario, &opts)?;
            for r in &summary.runs {
                let last = r.rows.last().expect("at least one episode");
                eprintln!(
                    "seed {}: nee {:.3} jfi_rate {:.3} coverage {:.1}% trigger {:?}",
                    r.seed, last.nee, last.jfi_rate, last.coverage_pct, r.rnf.trigger_episode
                );
            }
            eprintln!("wrote {}", out.display());
        }
        Command::Baseline {
            method,
            scenario,
            out,
            config,
            episodes,
            seeds,
        } => {
            let method: BaselineMethod = method.parse()?;
            let mut cfg = load_config(config.as_deref())?;
            apply_overrides(&mut cfg, episodes, seeds)?;
            let scenario = Scenario::load(&scenario)?;
            let outcome = harness::run_baseline(method, &cfg, &scenario, Some(&out))?;
            for log in &outcome.logs {
                let nee: Vec<f64> = log.iter().map(|r| r.nee).collect();
                eprintln!("seed {}: mean nee {:.3}", log[0].seed, orchid::metrics::mean(&nee));
            }
            eprintln!("wrote {}", out.display());
        }
        Command::Eval {
            checkpoint,
            scenario,
            episodes,
            eval_seed,
        } => {
            if episodes == 0 {
                return Err(Error::Config("episodes must be at least 1".into()));
            }
            let ck = Checkpoint::load(&checkpoint)?;
            let scenario = Scenario::load(&scenario)?;
            let report = harness::evaluate(&ck, &scenario, episodes, eval_seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            let mut out = std::io::stdout().lock();
            // a closed pipe (e.g. `| head`) is not an error
            if let Err(e) = writeln!(out, "{text}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(Error::Domain(format!("writing report: {e}")));
                }
            }
        }
        Command::ExportFigures { runs, out } => {
            let s = harness::export_figures(&runs, &out)?;
            eprintln!("exported {} runs ({} tidy rows) to {}", s.runs, s.tidy_rows, out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite(_) => 3,
        e if e.is_config() => 2,
        Error::Io { .. } | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
