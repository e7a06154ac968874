//! Ground-truth scenarios: sampling target births, survival and kinematics
//! from the generative model, with constant measurement rate and extent per
//! extended target.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use pmbm::gospa::Ellipse;
use pmbm::hybrid::HybridState;
use pmbm::numeric::sym_sqrt;

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Point,
    Extended,
}

/// One target's life: alive on steps `birth_step ..= death_step`
/// (1-based), with one kinematic state per alive step. The measurement
/// rate and extent of extended targets are constant over the life.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetTruth {
    pub id: usize,
    pub kind: TargetKind,
    pub birth_step: usize,
    pub death_step: usize,
    pub states: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<Vec<f64>>>,
}

impl TargetTruth {
    pub fn alive_at(&self, step: usize) -> bool {
        step >= self.birth_step && step <= self.death_step
    }

    pub fn state_at(&self, step: usize) -> Option<DVector<f64>> {
        self.alive_at(step)
            .then(|| DVector::from_row_slice(&self.states[step - self.birth_step]))
    }

    /// Single-target state on the hybrid space at `step`.
    pub fn hybrid_state_at(&self, step: usize) -> Option<HybridState> {
        let kinematics = self.state_at(step)?;
        Some(match self.kind {
            TargetKind::Point => HybridState::Point { kinematics },
            TargetKind::Extended => HybridState::Extended {
                gamma: self.gamma.expect("extended target has a rate"),
                kinematics,
                extent: self.extent_matrix().expect("extended target has extent"),
            },
        })
    }

    pub fn extent_matrix(&self) -> Option<DMatrix<f64>> {
        self.extent.as_ref().map(|rows| {
            let d = rows.len();
            DMatrix::from_fn(d, d, |i, j| rows[i][j])
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub steps: usize,
    pub targets: Vec<TargetTruth>,
}

impl GroundTruth {
    /// Base-metric representation of the targets alive at `step`: position
    /// through the observation matrix, extent zero for point targets.
    pub fn ellipses_at(&self, step: usize, obs_matrix: &DMatrix<f64>) -> Vec<Ellipse> {
        let mut out = Vec::new();
        for t in &self.targets {
            let Some(state) = t.state_at(step) else {
                continue;
            };
            let position = obs_matrix * state;
            match t.extent_matrix() {
                Some(extent) => out.push(Ellipse { position, extent }),
                None => out.push(Ellipse::point(position)),
            }
        }
        out
    }
}

fn standard_normal_vector(n: usize, rng: &mut ChaCha12Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draws from `N(mean, cov)` through the Cholesky factor.
pub fn sample_gaussian(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut ChaCha12Rng,
) -> DVector<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .expect("sampling covariance must be positive definite");
    mean + chol.l() * standard_normal_vector(mean.len(), rng)
}

/// Samples an inverse-Wishart extent with parameters `(dof, scale)` in the
/// convention where `E[X] = scale / (dof - 2d - 2)`: the inverse of a
/// Wishart draw with `dof - d - 1` degrees of freedom and scale
/// `scale^-1`, via the Bartlett decomposition.
pub fn sample_inverse_wishart(
    dof: f64,
    scale: &DMatrix<f64>,
    rng: &mut ChaCha12Rng,
) -> DMatrix<f64> {
    let d = scale.nrows();
    let wishart_dof = dof - d as f64 - 1.0;
    assert!(
        wishart_dof > d as f64 - 1.0,
        "inverse-Wishart dof too small to sample"
    );
    let sigma = scale
        .clone()
        .try_inverse()
        .expect("scale matrix must be invertible");
    let l = sigma
        .cholesky()
        .expect("inverse scale must be positive definite")
        .l()
        .clone_owned();
    let mut bartlett = DMatrix::zeros(d, d);
    for i in 0..d {
        let chi = rand_distr::ChiSquared::new(wishart_dof - i as f64)
            .expect("positive chi-square dof");
        bartlett[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let factor = &l * bartlett;
    let wishart = &factor * factor.transpose();
    let inv = wishart
        .try_inverse()
        .expect("Wishart draw must be invertible");
    (&inv + inv.transpose()) * 0.5
}

/// Samples births per step from the birth PPP, survival per step, and
/// kinematics from the motion model. Extended targets keep their sampled
/// measurement rate and extent for their whole life.
pub fn sample_ground_truth(cfg: &Config, rng: &mut ChaCha12Rng) -> GroundTruth {
    let motion = cfg.motion_model();
    let birth = cfg.birth_ppp();
    let point_weight: f64 = birth.point_components.iter().map(|c| c.weight).sum();
    let ext_weight: f64 = birth.extended_components.iter().map(|c| c.weight).sum();
    let total = point_weight + ext_weight;
    let survival = cfg.motion.survival;
    let steps = cfg.scenario.steps;

    // PSD square root: a zero process noise is a valid degenerate model
    let q_root = sym_sqrt(&motion.process_noise, "process noise")
        .expect("process noise must be positive semidefinite");

    let mut targets = Vec::new();
    for birth_step in 1..=steps {
        let n_births = if total > 0.0 {
            Poisson::new(total).expect("positive birth rate").sample(rng) as usize
        } else {
            0
        };
        for _ in 0..n_births {
            let is_point = rng.gen_bool(point_weight / total);
            let (kind, mut state, gamma, extent) = if is_point {
                let c = &birth.point_components[0];
                (
                    TargetKind::Point,
                    sample_gaussian(&c.gaussian.mean, &c.gaussian.cov, rng),
                    None,
                    None,
                )
            } else {
                let c = &birth.extended_components[0];
                let gamma = Gamma::new(c.ggiw.alpha, 1.0 / c.ggiw.beta)
                    .expect("valid gamma parameters")
                    .sample(rng);
                let extent = sample_inverse_wishart(c.ggiw.dof, &c.ggiw.scale, rng);
                (
                    TargetKind::Extended,
                    sample_gaussian(&c.ggiw.mean, &c.ggiw.cov, rng),
                    Some(gamma),
                    Some(extent),
                )
            };

            let mut states = vec![state.iter().copied().collect::<Vec<f64>>()];
            let mut death_step = birth_step;
            for _ in (birth_step + 1)..=steps {
                if !rng.gen_bool(survival) {
                    break;
                }
                state = &motion.transition * &state + &q_root * standard_normal_vector(4, rng);
                states.push(state.iter().copied().collect());
                death_step += 1;
            }

            targets.push(TargetTruth {
                id: targets.len(),
                kind,
                birth_step,
                death_step,
                states,
                gamma,
                extent: extent.map(|x| {
                    (0..x.nrows())
                        .map(|i| (0..x.ncols()).map(|j| x[(i, j)]).collect())
                        .collect()
                }),
            });
        }
    }

    GroundTruth { steps, targets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::run_rng;
    use approx::assert_relative_eq;

    #[test]
    fn zero_birth_weights_give_empty_truth() {
        let mut cfg = Config::default();
        cfg.birth.point_weight = 0.0;
        cfg.birth.extended_weight = 0.0;
        let mut rng = run_rng(1, 0);
        let truth = sample_ground_truth(&cfg, &mut rng);
        assert!(truth.targets.is_empty());
    }

    #[test]
    fn degenerate_motion_freezes_targets() {
        // zero time step makes the transition the identity and the process
        // noise zero; with certain survival targets are static forever
        let mut cfg = Config::default();
        cfg.motion.tau = 0.0;
        cfg.motion.survival = 1.0;
        cfg.scenario.steps = 25;
        let mut rng = run_rng(8, 0);
        let truth = sample_ground_truth(&cfg, &mut rng);
        assert!(!truth.targets.is_empty());
        for t in &truth.targets {
            assert_eq!(t.death_step, 25);
            for s in &t.states {
                assert_eq!(s, &t.states[0]);
            }
        }
    }

    #[test]
    fn certain_survival_keeps_targets_to_the_end() {
        let mut cfg = Config::default();
        cfg.motion.survival = 1.0;
        cfg.scenario.steps = 30;
        let mut rng = run_rng(3, 0);
        let truth = sample_ground_truth(&cfg, &mut rng);
        for t in &truth.targets {
            assert_eq!(t.death_step, 30);
            assert_eq!(t.states.len(), 30 - t.birth_step + 1);
        }
    }

    #[test]
    fn expected_point_births_match_poisson_superposition() {
        // 100 steps at weight 0.03 per step: 3 expected point births
        let mut cfg = Config::default();
        cfg.scenario.steps = 100;
        let draws = 10_000;
        let mut total_points = 0_usize;
        for i in 0..draws {
            let mut rng = run_rng(17, i);
            let truth = sample_ground_truth(&cfg, &mut rng);
            total_points += truth
                .targets
                .iter()
                .filter(|t| t.kind == TargetKind::Point)
                .count();
        }
        let mean = total_points as f64 / draws as f64;
        assert!(
            (mean - 3.0).abs() < 0.15,
            "mean point births {mean}, expected 3.0 within 5%"
        );
    }

    #[test]
    fn inverse_wishart_mean_matches_moment_formula() {
        let scale = DMatrix::from_row_slice(2, 2, &[200.0, 30.0, 30.0, 150.0]);
        let dof = 20.0;
        let mut rng = run_rng(5, 0);
        let draws = 20_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..draws {
            acc += sample_inverse_wishart(dof, &scale, &mut rng);
        }
        acc /= draws as f64;
        let expected = &scale / (dof - 6.0);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(acc[(i, j)], expected[(i, j)], max_relative = 0.05);
            }
        }
    }

    #[test]
    fn truth_round_trips_through_json_lines() {
        let mut cfg = Config::default();
        cfg.scenario.steps = 20;
        let mut rng = run_rng(11, 2);
        let truth = sample_ground_truth(&cfg, &mut rng);
        let json: Vec<String> = truth
            .targets
            .iter()
            .map(|t| serde_json::to_string(t).unwrap())
            .collect();
        let back: Vec<TargetTruth> = json
            .iter()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(back.len(), truth.targets.len());
        for (a, b) in truth.targets.iter().zip(&back) {
            assert_eq!(a.birth_step, b.birth_step);
            assert_eq!(a.states, b.states);
        }
    }
}
