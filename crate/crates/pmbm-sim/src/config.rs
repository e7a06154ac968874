//! Harness configuration: a TOML file with sections mirroring the scenario,
//! model, association and pruning parameters. Every field has a default so
//! partial files work; the defaults are the benchmark settings used
//! throughout the test suite.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use pmbm::assoc::Gating;
use pmbm::filter::{
    BernoulliBirth, BirthModel, ClutterModel, PartitionConfig, PruneConfig, Region, SensorModels,
    UpdateConfig,
};
use pmbm::hybrid::{
    GGIWParams, GaussianDensity, HybridSingleTargetDensity, PPPIntensity, WeightedGaussian,
    WeightedGgiw,
};
use pmbm::models::{ExtendedMeasModel, GGIWPredictParams, PointMeasModel, PointMotionModel};

/// Which filter to run. The E-variants zero the point-target birth weight;
/// the PMB variants project onto a single multi-Bernoulli after each
/// update; the MBM variant uses multi-Bernoulli birth with an empty PPP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum FilterVariant {
    PePmbm,
    PePmb,
    PeMbm,
    EPmbm,
    EPmb,
}

impl FilterVariant {
    pub fn projects_to_pmb(self) -> bool {
        matches!(self, FilterVariant::PePmb | FilterVariant::EPmb)
    }

    pub fn zero_point_birth(self) -> bool {
        matches!(self, FilterVariant::EPmbm | FilterVariant::EPmb)
    }

    pub fn multi_bernoulli_birth(self) -> bool {
        matches!(self, FilterVariant::PeMbm)
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterVariant::PePmbm => "pe-pmbm",
            FilterVariant::PePmb => "pe-pmb",
            FilterVariant::PeMbm => "pe-mbm",
            FilterVariant::EPmbm => "e-pmbm",
            FilterVariant::EPmb => "e-pmb",
        }
    }
}

impl std::fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub motion: MotionSection,
    pub ggiw_prediction: GgiwPredictionSection,
    pub birth: BirthSection,
    pub measurement: MeasurementSection,
    pub clutter: ClutterSection,
    pub association: AssociationSection,
    pub prune: PruneSection,
    pub estimation: EstimationSection,
    pub gospa: GospaSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSection {
    pub steps: usize,
    /// `[x_min, x_max, y_min, y_max]` in meters.
    pub region: [f64; 4],
    pub rng_seed: u64,
    /// Optional path to a fixed scenario file (line-delimited JSON); when
    /// set, runs reuse this ground truth instead of sampling one.
    pub fixed_scenario: Option<String>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            steps: 100,
            region: [-500.0, 500.0, -500.0, 500.0],
            rng_seed: 1,
            fixed_scenario: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionSection {
    pub tau: f64,
    pub process_noise: f64,
    pub survival: f64,
}

impl Default for MotionSection {
    fn default() -> Self {
        Self {
            tau: 1.0,
            process_noise: 0.25,
            survival: 0.99,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GgiwPredictionSection {
    pub extent_decay: f64,
    pub gamma_forget: f64,
}

impl Default for GgiwPredictionSection {
    fn default() -> Self {
        Self {
            extent_decay: 1e9,
            gamma_forget: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BirthSection {
    pub point_weight: f64,
    pub extended_weight: f64,
    pub mean: [f64; 4],
    pub cov_diag: [f64; 4],
    pub ggiw_alpha: f64,
    pub ggiw_beta: f64,
    pub ggiw_dof: f64,
    pub ggiw_scale_diag: [f64; 2],
    /// Multi-Bernoulli birth (MBM variant): existence and point-class
    /// probability of the single birth Bernoulli.
    pub mb_existence: f64,
    pub mb_point_prob: f64,
}

impl Default for BirthSection {
    fn default() -> Self {
        Self {
            point_weight: 0.03,
            extended_weight: 0.06,
            mean: [0.0; 4],
            cov_diag: [200.0 * 200.0, 16.0, 200.0 * 200.0, 16.0],
            ggiw_alpha: 40.0,
            ggiw_beta: 4.0,
            ggiw_dof: 20.0,
            ggiw_scale_diag: [200.0, 200.0],
            mb_existence: 0.06,
            mb_point_prob: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementSection {
    pub detection_point: f64,
    pub detection_extended: f64,
    pub noise_var: f64,
}

impl Default for MeasurementSection {
    fn default() -> Self {
        Self {
            detection_point: 0.95,
            detection_extended: 0.95,
            noise_var: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClutterSection {
    pub rate: f64,
}

impl Default for ClutterSection {
    fn default() -> Self {
        Self { rate: 8.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationSection {
    pub gate_prob: f64,
    pub dbscan_eps_min: f64,
    pub dbscan_eps_max: f64,
    pub dbscan_eps_step: f64,
}

impl Default for AssociationSection {
    fn default() -> Self {
        Self {
            gate_prob: 0.999,
            dbscan_eps_min: 0.1,
            dbscan_eps_max: 12.0,
            dbscan_eps_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneSection {
    pub max_globals: usize,
    pub ppp_weight_min: f64,
    pub bernoulli_exist_min: f64,
    pub global_weight_min: f64,
}

impl Default for PruneSection {
    fn default() -> Self {
        Self {
            max_globals: 20,
            ppp_weight_min: 1e-5,
            bernoulli_exist_min: 1e-3,
            global_weight_min: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationSection {
    pub existence_threshold: f64,
    pub point_prob_threshold: f64,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self {
            existence_threshold: 0.5,
            point_prob_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GospaSection {
    pub cutoff: f64,
    pub order: f64,
    pub alpha: f64,
}

impl Default for GospaSection {
    fn default() -> Self {
        Self {
            cutoff: 10.0,
            order: 2.0,
            alpha: 2.0,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn region(&self) -> Region {
        let [x_min, x_max, y_min, y_max] = self.scenario.region;
        Region {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    /// Nearly-constant-velocity transition and process noise for the state
    /// `[px, vx, py, vy]`.
    pub fn motion_model(&self) -> PointMotionModel {
        let tau = self.motion.tau;
        let q = self.motion.process_noise;
        let transition = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, tau, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, tau, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let mut process_noise = DMatrix::zeros(4, 4);
        for b in 0..2 {
            let o = 2 * b;
            process_noise[(o, o)] = q * t3 / 3.0;
            process_noise[(o, o + 1)] = q * t2 / 2.0;
            process_noise[(o + 1, o)] = q * t2 / 2.0;
            process_noise[(o + 1, o + 1)] = q * tau;
        }
        PointMotionModel {
            transition,
            process_noise,
            survival: self.motion.survival,
        }
    }

    pub fn ggiw_predict_params(&self) -> GGIWPredictParams {
        GGIWPredictParams {
            tau: self.motion.tau,
            extent_decay: self.ggiw_prediction.extent_decay,
            gamma_forget: self.ggiw_prediction.gamma_forget,
        }
    }

    pub fn obs_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    pub fn sensor_models(&self) -> SensorModels {
        SensorModels {
            point: PointMeasModel {
                obs_matrix: self.obs_matrix(),
                noise_cov: DMatrix::identity(2, 2) * self.measurement.noise_var,
                detection: self.measurement.detection_point,
            },
            extended: ExtendedMeasModel {
                obs_matrix: self.obs_matrix(),
                detection: self.measurement.detection_extended,
            },
        }
    }

    pub fn clutter_model(&self) -> ClutterModel {
        ClutterModel {
            rate: self.clutter.rate,
            region: self.region(),
        }
    }

    pub fn birth_gaussian(&self) -> GaussianDensity {
        GaussianDensity::new(
            DVector::from_row_slice(&self.birth.mean),
            DMatrix::from_diagonal(&DVector::from_row_slice(&self.birth.cov_diag)),
        )
    }

    pub fn birth_ggiw(&self) -> GGIWParams {
        let g = self.birth_gaussian();
        GGIWParams {
            alpha: self.birth.ggiw_alpha,
            beta: self.birth.ggiw_beta,
            mean: g.mean,
            cov: g.cov,
            dof: self.birth.ggiw_dof,
            scale: DMatrix::from_diagonal(&DVector::from_row_slice(&self.birth.ggiw_scale_diag)),
        }
    }

    /// Birth PPP intensity as used for ground-truth sampling (always the
    /// full model, independent of the filter variant).
    pub fn birth_ppp(&self) -> PPPIntensity {
        let mut ppp = PPPIntensity::default();
        if self.birth.point_weight > 0.0 {
            ppp.point_components.push(WeightedGaussian {
                weight: self.birth.point_weight,
                gaussian: self.birth_gaussian(),
            });
        }
        if self.birth.extended_weight > 0.0 {
            ppp.extended_components.push(WeightedGgiw {
                weight: self.birth.extended_weight,
                ggiw: self.birth_ggiw(),
            });
        }
        ppp
    }

    /// Birth model for a filter variant: the E-variants drop the point
    /// birth component, the MBM variant uses a single birth Bernoulli.
    pub fn birth_model(&self, variant: FilterVariant) -> BirthModel {
        if variant.multi_bernoulli_birth() {
            let c = self.birth.mb_point_prob;
            return BirthModel::MultiBernoulli(vec![BernoulliBirth {
                existence: self.birth.mb_existence,
                density: HybridSingleTargetDensity {
                    point_prob: c,
                    point: (c > 0.0).then(|| self.birth_gaussian()),
                    extended: (c < 1.0).then(|| self.birth_ggiw()),
                },
            }]);
        }
        let mut ppp = self.birth_ppp();
        if variant.zero_point_birth() {
            ppp.point_components.clear();
        }
        BirthModel::Ppp(ppp)
    }

    pub fn update_config(&self) -> UpdateConfig {
        UpdateConfig {
            gating: Gating::ChiSquare {
                gate_prob: self.association.gate_prob,
            },
            partitions: PartitionConfig::Dbscan {
                eps_min: self.association.dbscan_eps_min,
                eps_max: self.association.dbscan_eps_max,
                eps_step: self.association.dbscan_eps_step,
            },
            prune: self.prune_config(),
        }
    }

    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig {
            max_globals: self.prune.max_globals,
            ppp_weight_min: self.prune.ppp_weight_min,
            bernoulli_exist_min: self.prune.bernoulli_exist_min,
            global_weight_min: self.prune.global_weight_min,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_toml() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg.scenario.steps, 100);
        assert_eq!(cfg.prune.max_globals, 20);
        assert_eq!(cfg.birth.point_weight, 0.03);
    }

    #[test]
    fn partial_toml_overrides_one_section() {
        let cfg = Config::from_toml("[scenario]\nsteps = 7\nrng_seed = 42\n").unwrap();
        assert_eq!(cfg.scenario.steps, 7);
        assert_eq!(cfg.scenario.rng_seed, 42);
        assert_eq!(cfg.clutter.rate, 8.0);
    }

    #[test]
    fn e_variant_zeroes_point_birth_only() {
        let cfg = Config::default();
        match cfg.birth_model(FilterVariant::EPmbm) {
            BirthModel::Ppp(ppp) => {
                assert!(ppp.point_components.is_empty());
                assert_eq!(ppp.extended_components.len(), 1);
            }
            _ => panic!("expected PPP birth"),
        }
        match cfg.birth_model(FilterVariant::PePmbm) {
            BirthModel::Ppp(ppp) => {
                assert_eq!(ppp.point_components.len(), 1);
                assert_eq!(ppp.extended_components.len(), 1);
            }
            _ => panic!("expected PPP birth"),
        }
    }

    #[test]
    fn mbm_variant_uses_bernoulli_birth() {
        let cfg = Config::default();
        match cfg.birth_model(FilterVariant::PeMbm) {
            BirthModel::MultiBernoulli(births) => {
                assert_eq!(births.len(), 1);
                assert_eq!(births[0].existence, 0.06);
                assert!((births[0].density.point_prob - 1.0 / 3.0).abs() < 1e-12);
            }
            _ => panic!("expected multi-Bernoulli birth"),
        }
    }

    #[test]
    fn motion_model_matches_kronecker_structure() {
        let cfg = Config::default();
        let m = cfg.motion_model();
        assert_eq!(m.transition[(0, 1)], 1.0);
        assert_eq!(m.transition[(2, 3)], 1.0);
        assert_eq!(m.transition[(0, 2)], 0.0);
        let q = 0.25;
        assert!((m.process_noise[(0, 0)] - q / 3.0).abs() < 1e-15);
        assert!((m.process_noise[(1, 1)] - q).abs() < 1e-15);
    }
}
