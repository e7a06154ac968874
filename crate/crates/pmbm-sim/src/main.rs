//! Command-line driver: simulate scenarios, run a filter over a recorded
//! scenario, benchmark filters over Monte Carlo sweeps, and score estimate
//! files against ground truth.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use pmbm::gospa::gospa;
use pmbm_sim::config::{Config, FilterVariant};
use pmbm_sim::io;
use pmbm_sim::montecarlo::{
    run_filter, run_monte_carlo, MonteCarloResult, RmsSummary, StepRms,
};
use pmbm_sim::rng::run_rng;
use pmbm_sim::scenario::sample_ground_truth;

#[derive(Parser)]
#[command(name = "pmbm-sim", about = "Point/extended multi-target filtering benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base RNG seed; overrides the configuration value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a scenario and its measurements to JSON-lines files.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run one filter over a recorded scenario and score it.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = FilterVariant::PePmbm)]
        filter: FilterVariant,
        /// Scenario file (defaults to <out>/scenario.jsonl).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Measurement file (defaults to <out>/measurements.jsonl).
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
    /// Monte Carlo sweep of one filter; writes results.csv and summary.json.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = FilterVariant::PePmbm)]
        filter: FilterVariant,
        #[arg(long, default_value_t = 25)]
        runs: usize,
    },
    /// GOSPA between an estimate file and a scenario file.
    Score {
        #[command(flatten)]
        common: CommonArgs,
        /// Estimate file (defaults to <out>/estimates.jsonl).
        #[arg(long)]
        estimates: Option<PathBuf>,
        /// Scenario file (defaults to <out>/scenario.jsonl).
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn load_config(common: &CommonArgs) -> anyhow::Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.scenario.rng_seed = seed;
    }
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common } => {
            let cfg = load_config(&common)?;
            std::fs::create_dir_all(&common.out)?;
            let mut rng = run_rng(cfg.scenario.rng_seed, 0);
            let truth = sample_ground_truth(&cfg, &mut rng);
            let scans: Vec<_> = (1..=cfg.scenario.steps)
                .map(|step| {
                    pmbm_sim::measurements::generate_measurements(&truth, step, &cfg, &mut rng)
                })
                .collect();
            io::write_scenario(&common.out.join("scenario.jsonl"), &truth)?;
            io::write_measurements(&common.out.join("measurements.jsonl"), &scans)?;
            println!(
                "wrote {} targets and {} scans to {}",
                truth.targets.len(),
                scans.len(),
                common.out.display()
            );
        }
        Command::Run {
            common,
            filter,
            scenario,
            measurements,
        } => {
            let cfg = load_config(&common)?;
            std::fs::create_dir_all(&common.out)?;
            let scenario_path = scenario.unwrap_or_else(|| common.out.join("scenario.jsonl"));
            let measurements_path =
                measurements.unwrap_or_else(|| common.out.join("measurements.jsonl"));
            let truth = io::read_scenario(&scenario_path, cfg.scenario.steps)?;
            let scans = io::read_measurements(&measurements_path)?;
            anyhow::ensure!(
                scans.len() == cfg.scenario.steps,
                "measurement file has {} scans, configuration expects {}",
                scans.len(),
                cfg.scenario.steps
            );
            let t0 = std::time::Instant::now();
            let output = run_filter(&cfg, filter, &truth, &scans)?;
            let result = single_run_result(&cfg, filter, &output, t0.elapsed().as_secs_f64());
            io::write_estimates(&common.out.join("estimates.jsonl"), &output.estimates)?;
            io::write_results_csv(&common.out.join("results.csv"), &result)?;
            io::write_summary_json(&common.out.join("summary.json"), &result)?;
            println!(
                "{}: all-steps RMS-GOSPA {:.3} m ({:.2} s filter time)",
                filter, result.all_steps.rms_total, output.filter_seconds
            );
        }
        Command::Bench {
            common,
            filter,
            runs,
        } => {
            let cfg = load_config(&common)?;
            std::fs::create_dir_all(&common.out)?;
            let fixed = match &cfg.scenario.fixed_scenario {
                Some(path) => Some(io::read_scenario(
                    std::path::Path::new(path),
                    cfg.scenario.steps,
                )?),
                None => None,
            };
            let result =
                run_monte_carlo(&cfg, filter, runs, cfg.scenario.rng_seed, fixed.as_ref())?;
            io::write_results_csv(&common.out.join("results.csv"), &result)?;
            io::write_summary_json(&common.out.join("summary.json"), &result)?;
            println!(
                "{}: {} runs, all-steps RMS-GOSPA {:.3} m (loc {:.3}, missed {:.3}, false {:.3}), {:.2} s filter time",
                filter,
                runs,
                result.all_steps.rms_total,
                result.all_steps.rms_loc,
                result.all_steps.rms_missed,
                result.all_steps.rms_false,
                result.filter_seconds_total,
            );
        }
        Command::Score {
            common,
            estimates,
            scenario,
        } => {
            let cfg = load_config(&common)?;
            std::fs::create_dir_all(&common.out)?;
            let estimates_path = estimates.unwrap_or_else(|| common.out.join("estimates.jsonl"));
            let scenario_path = scenario.unwrap_or_else(|| common.out.join("scenario.jsonl"));
            let estimates = io::read_estimates(&estimates_path)?;
            let truth = io::read_scenario(&scenario_path, cfg.scenario.steps)?;
            let obs = cfg.obs_matrix();

            let mut per_step = Vec::with_capacity(estimates.len());
            let mut scores = Vec::with_capacity(estimates.len());
            for (idx, step_estimates) in estimates.iter().enumerate() {
                let step = idx + 1;
                let est: Vec<_> = step_estimates.iter().map(|e| e.ellipse(&obs)).collect();
                let tru = truth.ellipses_at(step, &obs);
                let score = gospa(&est, &tru, cfg.gospa.cutoff, cfg.gospa.order, cfg.gospa.alpha)?;
                per_step.push(StepRms {
                    step,
                    rms_total: score.total,
                    rms_loc: score.localization,
                    rms_missed: score.missed_cost,
                    rms_false: score.false_cost,
                });
                scores.push(score);
            }
            let n = scores.len().max(1) as f64;
            let result = MonteCarloResult {
                filter: "score".into(),
                runs: 1,
                seed: cfg.scenario.rng_seed,
                steps: scores.len(),
                per_step,
                all_steps: RmsSummary {
                    rms_total: (scores.iter().map(|s| s.total * s.total).sum::<f64>() / n).sqrt(),
                    rms_loc: (scores
                        .iter()
                        .map(|s| s.localization * s.localization)
                        .sum::<f64>()
                        / n)
                        .sqrt(),
                    rms_missed: (scores
                        .iter()
                        .map(|s| s.missed_cost * s.missed_cost)
                        .sum::<f64>()
                        / n)
                        .sqrt(),
                    rms_false: (scores
                        .iter()
                        .map(|s| s.false_cost * s.false_cost)
                        .sum::<f64>()
                        / n)
                        .sqrt(),
                },
                filter_seconds_total: 0.0,
                wall_seconds: 0.0,
            };
            io::write_results_csv(&common.out.join("results.csv"), &result)?;
            io::write_summary_json(&common.out.join("summary.json"), &result)?;
            println!(
                "all-steps RMS-GOSPA {:.3} m over {} steps",
                result.all_steps.rms_total, result.steps
            );
        }
    }
    Ok(())
}

fn single_run_result(
    cfg: &Config,
    filter: FilterVariant,
    output: &pmbm_sim::montecarlo::RunOutput,
    wall_seconds: f64,
) -> MonteCarloResult {
    let per_step = output
        .scores
        .iter()
        .enumerate()
        .map(|(idx, s)| StepRms {
            step: idx + 1,
            rms_total: s.total,
            rms_loc: s.localization,
            rms_missed: s.missed_cost,
            rms_false: s.false_cost,
        })
        .collect();
    let n = output.scores.len().max(1) as f64;
    MonteCarloResult {
        filter: filter.name().to_string(),
        runs: 1,
        seed: cfg.scenario.rng_seed,
        steps: output.scores.len(),
        per_step,
        all_steps: RmsSummary {
            rms_total: (output.scores.iter().map(|s| s.total * s.total).sum::<f64>() / n).sqrt(),
            rms_loc: (output
                .scores
                .iter()
                .map(|s| s.localization * s.localization)
                .sum::<f64>()
                / n)
                .sqrt(),
            rms_missed: (output
                .scores
                .iter()
                .map(|s| s.missed_cost * s.missed_cost)
                .sum::<f64>()
                / n)
                .sqrt(),
            rms_false: (output
                .scores
                .iter()
                .map(|s| s.false_cost * s.false_cost)
                .sum::<f64>()
                / n)
                .sqrt(),
        },
        filter_seconds_total: output.filter_seconds,
        wall_seconds,
    }
}
