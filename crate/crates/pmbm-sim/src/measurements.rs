//! Measurement generation: Bernoulli detection per target, one Gaussian
//! draw per detected point target, a Poisson number of Gaussian draws
//! spread by the extent per detected extended target, plus uniform Poisson
//! clutter. The scan is shuffled.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};

use pmbm::hybrid::HybridState;

use crate::config::Config;
use crate::scenario::{sample_gaussian, GroundTruth};

/// Measurements of one scan at `step` (1-based).
pub fn generate_measurements(
    truth: &GroundTruth,
    step: usize,
    cfg: &Config,
    rng: &mut ChaCha12Rng,
) -> Vec<DVector<f64>> {
    let models = cfg.sensor_models();
    let h = &models.point.obs_matrix;
    let mut scan: Vec<DVector<f64>> = Vec::new();

    for target in &truth.targets {
        let Some(state) = target.hybrid_state_at(step) else {
            continue;
        };
        match state {
            HybridState::Point { kinematics } => {
                if rng.gen_bool(models.point.detection) {
                    let mean = h * kinematics;
                    scan.push(sample_gaussian(&mean, &models.point.noise_cov, rng));
                }
            }
            HybridState::Extended {
                gamma,
                kinematics,
                extent,
            } => {
                if rng.gen_bool(models.extended.detection) {
                    let count = Poisson::new(gamma)
                        .expect("positive measurement rate")
                        .sample(rng) as usize;
                    let mean = h * kinematics;
                    for _ in 0..count {
                        scan.push(sample_gaussian(&mean, &extent, rng));
                    }
                }
            }
        }
    }

    let region = cfg.region();
    let clutter_count = if cfg.clutter.rate > 0.0 {
        Poisson::new(cfg.clutter.rate)
            .expect("positive clutter rate")
            .sample(rng) as usize
    } else {
        0
    };
    for _ in 0..clutter_count {
        scan.push(DVector::from_vec(vec![
            rng.gen_range(region.x_min..=region.x_max),
            rng.gen_range(region.y_min..=region.y_max),
        ]));
    }

    scan.shuffle(rng);
    scan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::run_rng;
    use crate::scenario::{TargetKind, TargetTruth};

    fn static_truth(kind: TargetKind, gamma: Option<f64>) -> GroundTruth {
        GroundTruth {
            steps: 1,
            targets: vec![TargetTruth {
                id: 0,
                kind,
                birth_step: 1,
                death_step: 1,
                states: vec![vec![5.0, 0.0, -3.0, 0.0]],
                gamma,
                extent: matches!(kind, TargetKind::Extended)
                    .then(|| vec![vec![4.0, 0.0], vec![0.0, 4.0]]),
            }],
        }
    }

    #[test]
    fn all_off_means_empty_scan() {
        let mut cfg = Config::default();
        cfg.measurement.detection_point = 0.0;
        cfg.measurement.detection_extended = 0.0;
        cfg.clutter.rate = 0.0;
        let truth = static_truth(TargetKind::Point, None);
        let mut rng = run_rng(1, 0);
        assert!(generate_measurements(&truth, 1, &cfg, &mut rng).is_empty());
    }

    #[test]
    fn clutter_mean_matches_rate() {
        let mut cfg = Config::default();
        cfg.measurement.detection_point = 0.0;
        cfg.measurement.detection_extended = 0.0;
        cfg.clutter.rate = 8.0;
        let truth = GroundTruth::default();
        let mut rng = run_rng(2, 0);
        let draws = 10_000;
        let total: usize = (0..draws)
            .map(|_| generate_measurements(&truth, 1, &cfg, &mut rng).len())
            .sum();
        let mean = total as f64 / draws as f64;
        assert!((mean - 8.0).abs() < 0.24, "clutter mean {mean} vs 8 (3%)");
    }

    #[test]
    fn extended_detection_count_matches_gamma() {
        let mut cfg = Config::default();
        cfg.measurement.detection_extended = 1.0;
        cfg.clutter.rate = 0.0;
        let truth = static_truth(TargetKind::Extended, Some(4.0));
        let mut rng = run_rng(3, 0);
        let draws = 10_000;
        let total: usize = (0..draws)
            .map(|_| generate_measurements(&truth, 1, &cfg, &mut rng).len())
            .sum();
        let mean = total as f64 / draws as f64;
        assert!((mean - 4.0).abs() < 0.12, "detection mean {mean} vs 4 (3%)");
    }

    #[test]
    fn point_detection_rate_matches_model() {
        let mut cfg = Config::default();
        cfg.measurement.detection_point = 0.95;
        cfg.clutter.rate = 0.0;
        let truth = static_truth(TargetKind::Point, None);
        let mut rng = run_rng(4, 0);
        let draws = 10_000;
        let total: usize = (0..draws)
            .map(|_| generate_measurements(&truth, 1, &cfg, &mut rng).len())
            .sum();
        let mean = total as f64 / draws as f64;
        // binomial std over 1e4 draws is ~0.002
        assert!((mean - 0.95).abs() < 0.01, "detection rate {mean}");
    }
}
