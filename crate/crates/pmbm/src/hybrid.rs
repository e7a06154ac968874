//! Domain types for the hybrid point/extended single-target space, Bernoulli
//! components, local/global hypotheses, and the PMBM density container.
//!
//! The single-target space is the disjoint union of a kinematic-only point
//! space and an extended-target space carrying a measurement rate and an
//! elliptic extent. A state is never both; densities on the hybrid space are
//! class-probability-weighted pairs of a Gaussian and a GGIW density.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PmbmError, Result};
use crate::numeric::symmetrize;

/// Tolerance for "global weights sum to one" checks.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A single target state: either a point target (kinematics only, SI units)
/// or an extended target with expected measurement count `gamma` and a
/// symmetric positive-definite extent matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum HybridState {
    Point {
        kinematics: DVector<f64>,
    },
    Extended {
        gamma: f64,
        kinematics: DVector<f64>,
        extent: DMatrix<f64>,
    },
}

impl HybridState {
    pub fn kinematics(&self) -> &DVector<f64> {
        match self {
            HybridState::Point { kinematics } => kinematics,
            HybridState::Extended { kinematics, .. } => kinematics,
        }
    }

    pub fn is_point(&self) -> bool {
        matches!(self, HybridState::Point { .. })
    }
}

/// Gaussian density over the kinematic state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            cov: symmetrize(&cov),
            mean,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cov.nrows() != self.dim() || self.cov.ncols() != self.dim() {
            return Err(PmbmError::DimensionMismatch {
                expected: self.dim(),
                got: self.cov.nrows(),
            });
        }
        check_symmetric_psd(&self.cov, "GaussianDensity::cov")
    }
}

/// Parameters of a factorised gamma Gaussian inverse-Wishart density:
/// `gamma ~ Gamma(alpha, beta)`, kinematics `~ N(mean, cov)`, extent
/// `~ IW(dof, scale)` with `E[extent] = scale / (dof - 2d - 2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GGIWParams {
    pub alpha: f64,
    pub beta: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub dof: f64,
    pub scale: DMatrix<f64>,
}

impl GGIWParams {
    /// Extent dimension `d`.
    pub fn extent_dim(&self) -> usize {
        self.scale.nrows()
    }

    /// Expected measurement rate `E[gamma] = alpha / beta`.
    pub fn expected_gamma(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Expected extent `E[X] = scale / (dof - 2d - 2)`; requires
    /// `dof > 2d + 2`.
    pub fn expected_extent(&self) -> Result<DMatrix<f64>> {
        let d = self.extent_dim() as f64;
        let denom = self.dof - 2.0 * d - 2.0;
        if denom <= 0.0 {
            return Err(PmbmError::DofTooLow {
                dof: self.dof,
                min: 2.0 * d + 2.0,
            });
        }
        Ok(&self.scale / denom)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.extent_dim() as f64;
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(PmbmError::InvalidParameter(format!(
                "gamma parameters must be positive, got alpha={}, beta={}",
                self.alpha, self.beta
            )));
        }
        if self.dof <= 2.0 * d {
            return Err(PmbmError::DofTooLow {
                dof: self.dof,
                min: 2.0 * d,
            });
        }
        check_symmetric_psd(&self.cov, "GGIWParams::cov")?;
        check_symmetric_spd(&self.scale, "GGIWParams::scale")
    }
}

/// Class-probability-weighted pair of a point (Gaussian) and an extended
/// (GGIW) density. A branch may be absent only when its class probability is
/// exactly zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridSingleTargetDensity {
    /// Probability that the target is a point target.
    pub point_prob: f64,
    pub point: Option<GaussianDensity>,
    pub extended: Option<GGIWParams>,
}

impl HybridSingleTargetDensity {
    pub fn point_only(g: GaussianDensity) -> Self {
        Self {
            point_prob: 1.0,
            point: Some(g),
            extended: None,
        }
    }

    pub fn extended_only(z: GGIWParams) -> Self {
        Self {
            point_prob: 0.0,
            point: None,
            extended: Some(z),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.point_prob) {
            return Err(PmbmError::InvalidParameter(format!(
                "point_prob {} outside [0, 1]",
                self.point_prob
            )));
        }
        if self.point.is_none() && self.point_prob > 0.0 {
            return Err(PmbmError::InvalidParameter(
                "point branch absent but point_prob > 0".into(),
            ));
        }
        if self.extended.is_none() && self.point_prob < 1.0 {
            return Err(PmbmError::InvalidParameter(
                "extended branch absent but point_prob < 1".into(),
            ));
        }
        if let Some(p) = &self.point {
            p.validate()?;
        }
        if let Some(e) = &self.extended {
            e.validate()?;
        }
        Ok(())
    }
}

/// Analytic integrals of a function over the two branches of the hybrid
/// space. The library only exposes the hybrid integral for integrands whose
/// per-branch integrals are known in closed form.
pub trait HybridIntegrable {
    fn point_integral(&self) -> f64;
    fn extended_integral(&self) -> f64;
}

/// Integral over the hybrid space: the sum of the point-branch and
/// extended-branch integrals.
pub fn hybrid_integral<T: HybridIntegrable + ?Sized>(f: &T) -> f64 {
    f.point_integral() + f.extended_integral()
}

impl HybridIntegrable for HybridSingleTargetDensity {
    fn point_integral(&self) -> f64 {
        self.point_prob
    }

    fn extended_integral(&self) -> f64 {
        1.0 - self.point_prob
    }
}

/// One association history for one track: weight (log domain), existence
/// probability and single-target density.
///
/// `density` is `None` only for the non-existence hypothesis of a new
/// Bernoulli, which has `existence == 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalHypothesis {
    pub log_weight: f64,
    pub existence: f64,
    pub density: Option<HybridSingleTargetDensity>,
    /// Append-only list of (time step, measurement index) pairs. Hypothesis
    /// identity is its history.
    pub assoc_history: Vec<(usize, usize)>,
}

impl LocalHypothesis {
    /// Measurement indices associated at time `step`.
    pub fn assoc_at(&self, step: usize) -> impl Iterator<Item = usize> + '_ {
        self.assoc_history
            .iter()
            .filter(move |(k, _)| *k == step)
            .map(|(_, j)| *j)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.existence) {
            return Err(PmbmError::InvalidParameter(format!(
                "existence {} outside [0, 1]",
                self.existence
            )));
        }
        if self.log_weight.is_nan() {
            return Err(PmbmError::InvalidParameter("NaN hypothesis weight".into()));
        }
        match &self.density {
            Some(d) => d.validate(),
            None if self.existence == 0.0 => Ok(()),
            None => Err(PmbmError::InvalidParameter(
                "hypothesis without density must have existence 0".into(),
            )),
        }
    }
}

/// A potential target: a tree of local hypotheses flattened into a list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub hypotheses: Vec<LocalHypothesis>,
}

/// A choice of one local hypothesis per track, with normalized weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalHypothesis {
    pub weight: f64,
    /// `choice[i]` indexes into `tracks[i].hypotheses`.
    pub choice: Vec<usize>,
}

/// PPP intensity mixture for undetected targets. The weight sums are the
/// expected numbers of undetected point and extended targets.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PPPIntensity {
    pub point_components: Vec<WeightedGaussian>,
    pub extended_components: Vec<WeightedGgiw>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedGaussian {
    pub weight: f64,
    pub gaussian: GaussianDensity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedGgiw {
    pub weight: f64,
    pub ggiw: GGIWParams,
}

impl PPPIntensity {
    pub fn is_empty(&self) -> bool {
        self.point_components.is_empty() && self.extended_components.is_empty()
    }

    /// Expected number of undetected targets (point plus extended).
    pub fn total_weight(&self) -> f64 {
        self.point_components.iter().map(|c| c.weight).sum::<f64>()
            + self
                .extended_components
                .iter()
                .map(|c| c.weight)
                .sum::<f64>()
    }
}

/// The PMBM posterior: PPP intensity plus a list of tracks and weighted
/// global hypotheses. Serializes to JSON for debugging snapshots and
/// regression fixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PMBMDensity {
    /// Current time step; association pairs are stamped with it.
    pub step: usize,
    /// Allocator for unique track ids.
    pub next_track_id: u64,
    pub ppp: PPPIntensity,
    pub tracks: Vec<Track>,
    pub globals: Vec<GlobalHypothesis>,
}

impl PMBMDensity {
    /// Empty prior: no undetected-target intensity, no tracks, one empty
    /// global hypothesis.
    pub fn empty() -> Self {
        Self {
            step: 0,
            next_track_id: 0,
            ppp: PPPIntensity::default(),
            tracks: Vec::new(),
            globals: vec![GlobalHypothesis {
                weight: 1.0,
                choice: Vec::new(),
            }],
        }
    }

    /// Global hypothesis with the highest weight.
    pub fn best_global(&self) -> Option<&GlobalHypothesis> {
        self.globals
            .iter()
            .max_by(|a, b| a.weight.total_cmp(&b.weight))
    }

    /// Checks every structural invariant: normalized global weights, valid
    /// hypothesis indices, probabilities in `[0, 1]`, SPD matrices, and
    /// pairwise-disjoint current-time measurement assignments per global.
    ///
    /// Full coverage of the gated measurement set is asserted where it
    /// holds exactly, at hypothesis-formation time inside the update;
    /// pruning may afterwards drop negligible-existence Bernoullis together
    /// with their associations.
    pub fn validate(&self) -> Result<()> {
        for c in &self.ppp.point_components {
            if c.weight <= 0.0 {
                return Err(PmbmError::InvalidParameter(
                    "PPP component weight must be positive".into(),
                ));
            }
            c.gaussian.validate()?;
        }
        for c in &self.ppp.extended_components {
            if c.weight <= 0.0 {
                return Err(PmbmError::InvalidParameter(
                    "PPP component weight must be positive".into(),
                ));
            }
            c.ggiw.validate()?;
        }
        for t in &self.tracks {
            if t.hypotheses.is_empty() {
                return Err(PmbmError::InvalidParameter(format!(
                    "track {} has no hypotheses",
                    t.id
                )));
            }
            for h in &t.hypotheses {
                h.validate()?;
            }
        }

        if self.globals.is_empty() {
            return Err(PmbmError::DegeneratePosterior);
        }
        let sum: f64 = self.globals.iter().map(|g| g.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(PmbmError::InvalidParameter(format!(
                "global weights sum to {sum}, expected 1"
            )));
        }

        for g in &self.globals {
            if g.choice.len() != self.tracks.len() {
                return Err(PmbmError::InvalidParameter(format!(
                    "global choice length {} does not match {} tracks",
                    g.choice.len(),
                    self.tracks.len()
                )));
            }
            let mut cover = BTreeSet::new();
            for (track, &a) in self.tracks.iter().zip(&g.choice) {
                let hyp = track.hypotheses.get(a).ok_or_else(|| {
                    PmbmError::InvalidParameter(format!(
                        "global selects hypothesis {a} of track {} with {} hypotheses",
                        track.id,
                        track.hypotheses.len()
                    ))
                })?;
                for j in hyp.assoc_at(self.step) {
                    if !cover.insert(j) {
                        return Err(PmbmError::InvalidParameter(format!(
                            "measurement {j} assigned twice within one global"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Divides global weights by their sum, preserving order.
pub fn normalize_globals(mut density: PMBMDensity) -> Result<PMBMDensity> {
    let sum: f64 = density.globals.iter().map(|g| g.weight).sum();
    if sum.is_nan() || sum <= 0.0 {
        return Err(PmbmError::DegeneratePosterior);
    }
    for g in &mut density.globals {
        g.weight /= sum;
    }
    Ok(density)
}

fn check_symmetric_psd(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    check_symmetry(m, context)?;
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    if let Some(&min) = eig
        .eigenvalues
        .iter()
        .min_by(|a, b| a.partial_cmp(b).unwrap())
    {
        if min < -1e-9 * scale {
            return Err(PmbmError::NotPositiveSemidefinite {
                context,
                value: min,
            });
        }
    }
    Ok(())
}

fn check_symmetric_spd(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    check_symmetry(m, context)?;
    if m.clone().cholesky().is_none() {
        return Err(PmbmError::SingularMatrix(context));
    }
    Ok(())
}

fn check_symmetry(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    let scale = m.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(PmbmError::InvalidParameter(format!(
                    "{context} is not symmetric"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_gaussian(dim: usize) -> GaussianDensity {
        GaussianDensity::new(DVector::zeros(dim), DMatrix::identity(dim, dim))
    }

    fn test_ggiw() -> GGIWParams {
        GGIWParams {
            alpha: 40.0,
            beta: 4.0,
            mean: DVector::zeros(4),
            cov: DMatrix::identity(4, 4),
            dof: 20.0,
            scale: DMatrix::identity(2, 2) * 200.0,
        }
    }

    fn hybrid_density(point_prob: f64) -> HybridSingleTargetDensity {
        HybridSingleTargetDensity {
            point_prob,
            point: Some(unit_gaussian(4)),
            extended: Some(test_ggiw()),
        }
    }

    #[test]
    fn hybrid_integral_of_density_is_one() {
        let d = hybrid_density(0.3);
        assert_relative_eq!(hybrid_integral(&d), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hybrid_integral_of_zero_is_zero() {
        struct Zero;
        impl HybridIntegrable for Zero {
            fn point_integral(&self) -> f64 {
                0.0
            }
            fn extended_integral(&self) -> f64 {
                0.0
            }
        }
        assert_eq!(hybrid_integral(&Zero), 0.0);
    }

    #[test]
    fn hybrid_integral_extended_indicator() {
        // indicator of the extended branch times the density integrates to
        // the extended class probability
        struct ExtendedPart<'a>(&'a HybridSingleTargetDensity);
        impl HybridIntegrable for ExtendedPart<'_> {
            fn point_integral(&self) -> f64 {
                0.0
            }
            fn extended_integral(&self) -> f64 {
                1.0 - self.0.point_prob
            }
        }
        let d = hybrid_density(0.3);
        assert_relative_eq!(hybrid_integral(&ExtendedPart(&d)), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn normalize_globals_divides_by_sum() {
        let mut d = PMBMDensity::empty();
        d.globals = vec![
            GlobalHypothesis {
                weight: 2.0,
                choice: vec![],
            },
            GlobalHypothesis {
                weight: 2.0,
                choice: vec![],
            },
        ];
        let d = normalize_globals(d).unwrap();
        assert_relative_eq!(d.globals[0].weight, 0.5);
        assert_relative_eq!(d.globals[1].weight, 0.5);

        let mut d2 = PMBMDensity::empty();
        d2.globals = vec![
            GlobalHypothesis {
                weight: 1.0,
                choice: vec![],
            },
            GlobalHypothesis {
                weight: 0.0,
                choice: vec![],
            },
            GlobalHypothesis {
                weight: 3.0,
                choice: vec![],
            },
        ];
        let d2 = normalize_globals(d2).unwrap();
        assert_relative_eq!(d2.globals[0].weight, 0.25);
        assert_relative_eq!(d2.globals[1].weight, 0.0);
        assert_relative_eq!(d2.globals[2].weight, 0.75);
    }

    #[test]
    fn normalize_globals_single_weight() {
        let mut d = PMBMDensity::empty();
        d.globals = vec![GlobalHypothesis {
            weight: 7.0,
            choice: vec![],
        }];
        let d = normalize_globals(d).unwrap();
        assert_relative_eq!(d.globals[0].weight, 1.0);
    }

    #[test]
    fn normalize_globals_rejects_all_zero() {
        let mut d = PMBMDensity::empty();
        d.globals = vec![GlobalHypothesis {
            weight: 0.0,
            choice: vec![],
        }];
        assert!(matches!(
            normalize_globals(d),
            Err(PmbmError::DegeneratePosterior)
        ));
    }

    #[test]
    fn validate_rejects_double_assignment() {
        let mut d = PMBMDensity::empty();
        d.step = 3;
        let hyp = |j: usize| LocalHypothesis {
            log_weight: 0.0,
            existence: 1.0,
            density: Some(hybrid_density(0.5)),
            assoc_history: vec![(3, j)],
        };
        d.tracks = vec![
            Track {
                id: 0,
                hypotheses: vec![hyp(0)],
            },
            Track {
                id: 1,
                hypotheses: vec![hyp(0)],
            },
        ];
        d.globals = vec![GlobalHypothesis {
            weight: 1.0,
            choice: vec![0, 0],
        }];
        assert!(d.validate().is_err());
    }

    #[test]
    fn validate_accepts_disjoint_cover() {
        let mut d = PMBMDensity::empty();
        d.step = 3;
        let hyp = |j: usize| LocalHypothesis {
            log_weight: 0.0,
            existence: 1.0,
            density: Some(hybrid_density(0.5)),
            assoc_history: vec![(3, j)],
        };
        d.tracks = vec![
            Track {
                id: 0,
                hypotheses: vec![hyp(0)],
            },
            Track {
                id: 1,
                hypotheses: vec![hyp(1)],
            },
        ];
        d.globals = vec![GlobalHypothesis {
            weight: 1.0,
            choice: vec![0, 0],
        }];
        d.validate().unwrap();
    }

    #[test]
    fn snapshot_round_trips_through_json() {
        let mut d = PMBMDensity::empty();
        d.ppp.point_components.push(WeightedGaussian {
            weight: 0.03,
            gaussian: unit_gaussian(4),
        });
        d.ppp.extended_components.push(WeightedGgiw {
            weight: 0.06,
            ggiw: test_ggiw(),
        });
        d.tracks.push(Track {
            id: 0,
            hypotheses: vec![LocalHypothesis {
                log_weight: -0.25,
                existence: 0.9,
                density: Some(hybrid_density(0.4)),
                assoc_history: vec![(1, 0), (2, 1)],
            }],
        });
        d.globals = vec![GlobalHypothesis {
            weight: 1.0,
            choice: vec![0],
        }];

        let json = serde_json::to_string(&d).unwrap();
        let back: PMBMDensity = serde_json::from_str(&json).unwrap();
        assert_eq!(back.tracks.len(), 1);
        assert_relative_eq!(back.tracks[0].hypotheses[0].existence, 0.9);
        assert_relative_eq!(
            back.ppp.extended_components[0].ggiw.alpha,
            40.0,
            epsilon = 0.0
        );
        assert_eq!(back.globals[0].choice, vec![0]);
    }
}
