//! File formats: per-step results as CSV, run summaries as JSON, and
//! scenarios / measurements / estimates as line-delimited JSON records.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use pmbm::estimator::TargetEstimate;

use crate::montecarlo::MonteCarloResult;
use crate::scenario::{GroundTruth, TargetTruth};

/// `results.csv`: one row per time step with the RMS-GOSPA decomposition.
pub fn write_results_csv(path: &Path, result: &MonteCarloResult) -> anyhow::Result<()> {
    let mut out = String::from("step,rms_total,rms_loc,rms_missed,rms_false\n");
    for row in &result.per_step {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            row.step, row.rms_total, row.rms_loc, row.rms_missed, row.rms_false
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `summary.json`: the all-steps aggregates plus timing.
pub fn write_summary_json(path: &Path, result: &MonteCarloResult) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Summary<'a> {
        filter: &'a str,
        runs: usize,
        seed: u64,
        steps: usize,
        rms_total: f64,
        rms_loc: f64,
        rms_missed: f64,
        rms_false: f64,
        filter_seconds_total: f64,
        wall_seconds: f64,
    }
    let summary = Summary {
        filter: &result.filter,
        runs: result.runs,
        seed: result.seed,
        steps: result.steps,
        rms_total: result.all_steps.rms_total,
        rms_loc: result.all_steps.rms_loc,
        rms_missed: result.all_steps.rms_missed,
        rms_false: result.all_steps.rms_false,
        filter_seconds_total: result.filter_seconds_total,
        wall_seconds: result.wall_seconds,
    };
    fs::write(path, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

/// Scenario file: one JSON record per target.
pub fn write_scenario(path: &Path, truth: &GroundTruth) -> anyhow::Result<()> {
    let mut file = fs::File::create(path)?;
    for target in &truth.targets {
        writeln!(file, "{}", serde_json::to_string(target)?)?;
    }
    Ok(())
}

pub fn read_scenario(path: &Path, steps: usize) -> anyhow::Result<GroundTruth> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut targets: Vec<TargetTruth> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        targets.push(serde_json::from_str(&line)?);
    }
    Ok(GroundTruth { steps, targets })
}

#[derive(Debug, Serialize, Deserialize)]
struct ScanRecord {
    step: usize,
    measurements: Vec<Vec<f64>>,
}

/// Measurement file: one JSON record per scan.
pub fn write_measurements(path: &Path, scans: &[Vec<DVector<f64>>]) -> anyhow::Result<()> {
    let mut file = fs::File::create(path)?;
    for (idx, scan) in scans.iter().enumerate() {
        let record = ScanRecord {
            step: idx + 1,
            measurements: scan.iter().map(|z| z.iter().copied().collect()).collect(),
        };
        writeln!(file, "{}", serde_json::to_string(&record)?)?;
    }
    Ok(())
}

pub fn read_measurements(path: &Path) -> anyhow::Result<Vec<Vec<DVector<f64>>>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records: Vec<ScanRecord> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    records.sort_by_key(|r| r.step);
    Ok(records
        .into_iter()
        .map(|r| {
            r.measurements
                .into_iter()
                .map(DVector::from_vec)
                .collect()
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct EstimateRecord {
    step: usize,
    estimates: Vec<TargetEstimate>,
}

/// Estimate file: one JSON record per step.
pub fn write_estimates(path: &Path, estimates: &[Vec<TargetEstimate>]) -> anyhow::Result<()> {
    let mut file = fs::File::create(path)?;
    for (idx, step_estimates) in estimates.iter().enumerate() {
        let record = EstimateRecord {
            step: idx + 1,
            estimates: step_estimates.clone(),
        };
        writeln!(file, "{}", serde_json::to_string(&record)?)?;
    }
    Ok(())
}

pub fn read_estimates(path: &Path) -> anyhow::Result<Vec<Vec<TargetEstimate>>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records: Vec<EstimateRecord> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    records.sort_by_key(|r| r.step);
    Ok(records.into_iter().map(|r| r.estimates).collect())
}
