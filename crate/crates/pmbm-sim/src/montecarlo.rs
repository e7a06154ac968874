//! Monte Carlo execution of the filter variants: per-run scenario and
//! measurement generation, the predict/update/estimate loop, GOSPA scoring
//! per step and RMS aggregation across runs.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pmbm::estimator::{estimate, TargetEstimate};
use pmbm::filter::{predict, update};
use pmbm::gospa::{gospa, GospaResult};
use pmbm::hybrid::PMBMDensity;
use pmbm::pmb::pmb_project;

use crate::config::{Config, FilterVariant};
use crate::measurements::generate_measurements;
use crate::rng::run_rng;
use crate::scenario::{sample_ground_truth, GroundTruth};

/// Output of one filter pass over one scenario.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub estimates: Vec<Vec<TargetEstimate>>,
    pub scores: Vec<GospaResult>,
    /// Time spent inside the filter recursion (prediction, update,
    /// projection, estimation), excluding data generation and scoring.
    pub filter_seconds: f64,
}

/// One filter pass over a fixed scenario and measurement sequence.
pub fn run_filter(
    cfg: &Config,
    variant: FilterVariant,
    truth: &GroundTruth,
    scans: &[Vec<DVector<f64>>],
) -> anyhow::Result<RunOutput> {
    let motion = cfg.motion_model();
    let ggiw_params = cfg.ggiw_predict_params();
    let birth = cfg.birth_model(variant);
    let models = cfg.sensor_models();
    let clutter = cfg.clutter_model();
    let update_cfg = cfg.update_config();
    let obs = cfg.obs_matrix();

    let mut density = PMBMDensity::empty();
    let mut estimates = Vec::with_capacity(scans.len());
    let mut scores = Vec::with_capacity(scans.len());
    let mut filter_seconds = 0.0;

    for (idx, scan) in scans.iter().enumerate() {
        let step = idx + 1;
        let t0 = std::time::Instant::now();
        density = predict(&density, &motion, &ggiw_params, &birth)?;
        density = update(&density, scan, &models, &clutter, &update_cfg)?;
        if variant.projects_to_pmb() {
            density = pmb_project(&density, cfg.prune.bernoulli_exist_min)?;
        }
        let step_estimates = estimate(
            &density,
            cfg.estimation.existence_threshold,
            cfg.estimation.point_prob_threshold,
        )?;
        filter_seconds += t0.elapsed().as_secs_f64();

        let est_ellipses: Vec<_> = step_estimates.iter().map(|e| e.ellipse(&obs)).collect();
        let truth_ellipses = truth.ellipses_at(step, &obs);
        scores.push(gospa(
            &est_ellipses,
            &truth_ellipses,
            cfg.gospa.cutoff,
            cfg.gospa.order,
            cfg.gospa.alpha,
        )?);
        estimates.push(step_estimates);
    }

    Ok(RunOutput {
        estimates,
        scores,
        filter_seconds,
    })
}

/// Scenario and measurements for one run, derived deterministically from
/// the base seed and the run index.
pub fn simulate_run(cfg: &Config, seed: u64, run_index: u64) -> (GroundTruth, Vec<Vec<DVector<f64>>>) {
    let mut rng = run_rng(seed, run_index);
    let truth = sample_ground_truth(cfg, &mut rng);
    let scans = (1..=cfg.scenario.steps)
        .map(|step| generate_measurements(&truth, step, cfg, &mut rng))
        .collect();
    (truth, scans)
}

/// Measurements for a fixed scenario, same substream layout as
/// [`simulate_run`] but skipping truth sampling.
pub fn simulate_measurements_for(
    cfg: &Config,
    truth: &GroundTruth,
    seed: u64,
    run_index: u64,
) -> Vec<Vec<DVector<f64>>> {
    let mut rng = run_rng(seed, run_index);
    (1..=cfg.scenario.steps)
        .map(|step| generate_measurements(truth, step, cfg, &mut rng))
        .collect()
}

/// Per-step RMS over runs, of the GOSPA total and its decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRms {
    pub step: usize,
    pub rms_total: f64,
    pub rms_loc: f64,
    pub rms_missed: f64,
    pub rms_false: f64,
}

/// RMS over all runs and steps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RmsSummary {
    pub rms_total: f64,
    pub rms_loc: f64,
    pub rms_missed: f64,
    pub rms_false: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub filter: String,
    pub runs: usize,
    pub seed: u64,
    pub steps: usize,
    pub per_step: Vec<StepRms>,
    pub all_steps: RmsSummary,
    /// Sum of per-run filter times (scheduling-independent).
    pub filter_seconds_total: f64,
    /// Wall-clock time of the whole sweep, including data generation.
    pub wall_seconds: f64,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0_usize;
    for v in values {
        sum += v * v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// Runs `runs` Monte Carlo repetitions of one filter variant. Each run
/// samples its own scenario (or loads the fixed one), generates
/// measurements and filters them; results are reduced in run order, so the
/// output is independent of the worker schedule.
pub fn run_monte_carlo(
    cfg: &Config,
    variant: FilterVariant,
    runs: usize,
    seed: u64,
    fixed_truth: Option<&GroundTruth>,
) -> anyhow::Result<MonteCarloResult> {
    let wall_start = std::time::Instant::now();
    let outputs: Vec<RunOutput> = (0..runs as u64)
        .into_par_iter()
        .map(|run_index| {
            let (truth, scans);
            let truth_ref = match fixed_truth {
                Some(t) => {
                    scans = simulate_measurements_for(cfg, t, seed, run_index);
                    t
                }
                None => {
                    (truth, scans) = simulate_run(cfg, seed, run_index);
                    &truth
                }
            };
            run_filter(cfg, variant, truth_ref, &scans)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let steps = cfg.scenario.steps;
    let per_step = (0..steps)
        .map(|idx| StepRms {
            step: idx + 1,
            rms_total: rms(outputs.iter().map(|o| o.scores[idx].total)),
            rms_loc: rms(outputs.iter().map(|o| o.scores[idx].localization)),
            rms_missed: rms(outputs.iter().map(|o| o.scores[idx].missed_cost)),
            rms_false: rms(outputs.iter().map(|o| o.scores[idx].false_cost)),
        })
        .collect();
    let all_steps = RmsSummary {
        rms_total: rms(outputs.iter().flat_map(|o| o.scores.iter().map(|s| s.total))),
        rms_loc: rms(outputs
            .iter()
            .flat_map(|o| o.scores.iter().map(|s| s.localization))),
        rms_missed: rms(outputs
            .iter()
            .flat_map(|o| o.scores.iter().map(|s| s.missed_cost))),
        rms_false: rms(outputs
            .iter()
            .flat_map(|o| o.scores.iter().map(|s| s.false_cost))),
    };

    Ok(MonteCarloResult {
        filter: variant.name().to_string(),
        runs,
        seed,
        steps,
        per_step,
        all_steps,
        filter_seconds_total: outputs.iter().map(|o| o.filter_seconds).sum(),
        wall_seconds: wall_start.elapsed().as_secs_f64(),
    })
}
