//! Single-target math: Kalman predict/update with marginal likelihood, GGIW
//! predict/update with marginal likelihood, and moment-matched reduction of
//! Gamma, Gaussian and GGIW mixtures.
//!
//! All marginal likelihoods are returned in the log domain and exclude
//! detection probabilities; detection factors are applied by the caller so
//! the same math serves misdetection and detection branches.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{PmbmError, Result};
use crate::hybrid::{GGIWParams, GaussianDensity};
use crate::numeric::{ln_multigamma, spd_log_det, spd_solve, sym_sqrt, symmetrize, trigamma};

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;

/// Linear-Gaussian motion model with constant survival probability.
#[derive(Debug, Clone)]
pub struct PointMotionModel {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub survival: f64,
}

/// Linear-Gaussian measurement model for point targets.
#[derive(Debug, Clone)]
pub struct PointMeasModel {
    pub obs_matrix: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
    pub detection: f64,
}

/// Measurement model for extended targets: each measurement is Gaussian
/// around the projected kinematic state with the extent as spread.
#[derive(Debug, Clone)]
pub struct ExtendedMeasModel {
    pub obs_matrix: DMatrix<f64>,
    pub detection: f64,
}

/// Constants of the GGIW prediction: the extent degrees of freedom decay
/// towards their minimum with time constant `extent_decay`, and the gamma
/// parameters are divided by `gamma_forget`.
#[derive(Debug, Clone)]
pub struct GGIWPredictParams {
    pub tau: f64,
    pub extent_decay: f64,
    pub gamma_forget: f64,
}

impl Default for GGIWPredictParams {
    fn default() -> Self {
        // effectively constant extent and measurement rate
        Self {
            tau: 1.0,
            extent_decay: 1e9,
            gamma_forget: 1.0,
        }
    }
}

/// Kalman prediction: `mean' = F mean`, `cov' = F cov F^T + Q`.
pub fn kalman_predict(g: &GaussianDensity, m: &PointMotionModel) -> Result<GaussianDensity> {
    let n = g.dim();
    if m.transition.ncols() != n {
        return Err(PmbmError::DimensionMismatch {
            expected: n,
            got: m.transition.ncols(),
        });
    }
    let mean = &m.transition * &g.mean;
    let cov = symmetrize(&(&m.transition * &g.cov * m.transition.transpose() + &m.process_noise));
    Ok(GaussianDensity { mean, cov })
}

/// Kalman update returning the posterior and the log marginal likelihood
/// `ln N(z; H mean, H cov H^T + R)`. The detection probability is not
/// included.
pub fn kalman_update(
    g: &GaussianDensity,
    z: &DVector<f64>,
    m: &PointMeasModel,
) -> Result<(GaussianDensity, f64)> {
    if m.obs_matrix.ncols() != g.dim() {
        return Err(PmbmError::DimensionMismatch {
            expected: g.dim(),
            got: m.obs_matrix.ncols(),
        });
    }
    if z.len() != m.obs_matrix.nrows() {
        return Err(PmbmError::DimensionMismatch {
            expected: m.obs_matrix.nrows(),
            got: z.len(),
        });
    }
    let h = &m.obs_matrix;
    let innovation_cov = symmetrize(&(h * &g.cov * h.transpose() + &m.noise_cov));
    let residual = z - h * &g.mean;
    gaussian_posterior(g, h, &innovation_cov, &m.noise_cov, &residual)
}

/// Shared Kalman-style correction given innovation covariance `s` and the
/// effective measurement spread `spread` (Joseph-form covariance update).
fn gaussian_posterior(
    g: &GaussianDensity,
    h: &DMatrix<f64>,
    s: &DMatrix<f64>,
    spread: &DMatrix<f64>,
    residual: &DVector<f64>,
) -> Result<(GaussianDensity, f64)> {
    let n_z = s.nrows();
    // K = P H^T S^-1, computed as (S^-1 H P)^T
    let (s_inv_hp, log_det_s) = spd_solve(s, &(h * &g.cov), "innovation covariance")?;
    let gain = s_inv_hp.transpose();
    let mean = &g.mean + &gain * residual;
    let eye = DMatrix::identity(g.dim(), g.dim());
    let a = &eye - &gain * h;
    let cov = symmetrize(&(&a * &g.cov * a.transpose() + &gain * spread * gain.transpose()));

    let (s_inv_res, _) = spd_solve(s, &DMatrix::from_column_slice(n_z, 1, residual.as_slice()), {
        "innovation covariance"
    })?;
    let maha_sq = residual.dot(&s_inv_res.column(0).into_owned());
    let log_lik =
        -0.5 * (n_z as f64 * (2.0 * std::f64::consts::PI).ln() + log_det_s + maha_sq);
    Ok((GaussianDensity { mean, cov }, log_lik))
}

/// Log likelihood of an extended target generating the empty measurement
/// set (given detection), `(beta / (beta + 1))^alpha` in log domain.
pub fn ggiw_empty_log_likelihood(zeta: &GGIWParams) -> f64 {
    zeta.alpha * (zeta.beta / (zeta.beta + 1.0)).ln()
}

/// GGIW update with a measurement set, returning the updated parameters and
/// the log marginal likelihood. The empty set only increments `beta` by one.
pub fn ggiw_update(
    zeta: &GGIWParams,
    measurements: &[DVector<f64>],
    m: &ExtendedMeasModel,
) -> Result<(GGIWParams, f64)> {
    let card = measurements.len();
    if card == 0 {
        let mut updated = zeta.clone();
        updated.beta += 1.0;
        return Ok((updated, ggiw_empty_log_likelihood(zeta)));
    }

    let d = zeta.extent_dim();
    if zeta.dof <= 2.0 * d as f64 + 2.0 {
        return Err(PmbmError::DofTooLow {
            dof: zeta.dof,
            min: 2.0 * d as f64 + 2.0,
        });
    }
    let h = &m.obs_matrix;
    for z in measurements {
        if z.len() != d {
            return Err(PmbmError::DimensionMismatch {
                expected: d,
                got: z.len(),
            });
        }
    }

    let card_f = card as f64;
    let mut centroid = DVector::zeros(d);
    for z in measurements {
        centroid += z;
    }
    centroid /= card_f;
    let mut scatter = DMatrix::zeros(d, d);
    for z in measurements {
        let dev = z - &centroid;
        scatter += &dev * dev.transpose();
    }

    let extent_hat = zeta.expected_extent()?;
    let residual = &centroid - h * &zeta.mean;
    let s = symmetrize(&(h * &zeta.cov * h.transpose() + &extent_hat / card_f));

    let prior_kin = GaussianDensity {
        mean: zeta.mean.clone(),
        cov: zeta.cov.clone(),
    };
    let (kin, _) = gaussian_posterior(&prior_kin, h, &s, &(&extent_hat / card_f), &residual)?;

    // N = X^1/2 S^-1/2 eps eps^T S^-T/2 X^T/2, rank one with symmetric roots
    let extent_root = sym_sqrt(&extent_hat, "predicted extent")?;
    let s_eig = s.clone().symmetric_eigen();
    let mut inv_roots = DVector::zeros(d);
    for (i, &ev) in s_eig.eigenvalues.iter().enumerate() {
        if ev <= 0.0 {
            return Err(PmbmError::SingularMatrix("innovation covariance"));
        }
        inv_roots[i] = 1.0 / ev.sqrt();
    }
    let s_inv_root = symmetrize(
        &(&s_eig.eigenvectors * DMatrix::from_diagonal(&inv_roots) * s_eig.eigenvectors.transpose()),
    );
    let n_vec = &extent_root * (&s_inv_root * &residual);
    let innovation_outer = &n_vec * n_vec.transpose();

    let alpha = zeta.alpha + card_f;
    let beta = zeta.beta + 1.0;
    let dof = zeta.dof + card_f;
    let scale = symmetrize(&(&zeta.scale + &innovation_outer + &scatter));
    if scale.clone().cholesky().is_none() {
        return Err(PmbmError::SingularMatrix("updated extent scale"));
    }

    let d_f = d as f64;
    let log_det_prior_scale = spd_log_det(&zeta.scale, "prior extent scale")?;
    let log_det_scale = spd_log_det(&scale, "updated extent scale")?;
    let log_det_extent = spd_log_det(&extent_hat, "predicted extent")?;
    let log_det_s = spd_log_det(&s, "innovation covariance")?;

    let log_lik = -0.5 * d_f * (card_f * std::f64::consts::PI.ln() + card_f.ln())
        + 0.5 * (zeta.dof - d_f - 1.0) * log_det_prior_scale
        - 0.5 * (dof - d_f - 1.0) * log_det_scale
        + ln_multigamma(d, 0.5 * (dof - d_f - 1.0))
        - ln_multigamma(d, 0.5 * (zeta.dof - d_f - 1.0))
        + 0.5 * log_det_extent
        - 0.5 * log_det_s
        + ln_gamma(alpha)
        - ln_gamma(zeta.alpha)
        + zeta.alpha * zeta.beta.ln()
        - alpha * beta.ln();

    Ok((
        GGIWParams {
            alpha,
            beta,
            mean: kin.mean,
            cov: kin.cov,
            dof,
            scale,
        },
        log_lik,
    ))
}

/// GGIW prediction: kinematics through the Kalman prediction, extent degrees
/// of freedom decayed towards `2d + 2` (keeping the expected extent fixed),
/// gamma parameters divided by the forgetting factor.
pub fn ggiw_predict(
    zeta: &GGIWParams,
    motion: &PointMotionModel,
    p: &GGIWPredictParams,
) -> Result<GGIWParams> {
    let d = zeta.extent_dim() as f64;
    let floor = 2.0 * d + 2.0;
    if zeta.dof <= floor {
        return Err(PmbmError::DofTooLow {
            dof: zeta.dof,
            min: floor,
        });
    }
    let kin = kalman_predict(
        &GaussianDensity {
            mean: zeta.mean.clone(),
            cov: zeta.cov.clone(),
        },
        motion,
    )?;
    let decay = (-p.tau / p.extent_decay).exp();
    let dof = floor + decay * (zeta.dof - floor);
    let scale = &zeta.scale * ((dof - floor) / (zeta.dof - floor));
    Ok(GGIWParams {
        alpha: zeta.alpha / p.gamma_forget,
        beta: zeta.beta / p.gamma_forget,
        mean: kin.mean,
        cov: kin.cov,
        dof,
        scale,
    })
}

/// Merges a Gamma mixture into a single Gamma matching the mixture mean
/// exactly and the mixture mean-log within `1e-10` (Newton on the digamma
/// equation). Components are `(weight, alpha, beta)`.
pub fn gamma_merge(components: &[(f64, f64, f64)]) -> Result<(f64, f64)> {
    if components.is_empty() {
        return Err(PmbmError::InvalidParameter(
            "gamma_merge needs at least one component".into(),
        ));
    }
    if components.len() == 1 {
        return Ok((components[0].1, components[0].2));
    }
    let total: f64 = components.iter().map(|c| c.0).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(PmbmError::InvalidParameter(
            "gamma_merge weights must be positive".into(),
        ));
    }

    let mut mean = 0.0;
    let mut mean_log = 0.0;
    let mut second = 0.0;
    for &(w, alpha, beta) in components {
        let w = w / total;
        let m = alpha / beta;
        mean += w * m;
        mean_log += w * (digamma(alpha) - beta.ln());
        second += w * (alpha / (beta * beta) + m * m);
    }
    let variance = second - mean * mean;

    // solve psi(a) - ln a = mean_log - ln mean
    let target = mean_log - mean.ln();
    let moment_alpha = if variance > 0.0 {
        mean * mean / variance
    } else {
        1.0
    };
    if target >= 0.0 {
        // numerically a point mass; the moment match is all we can do
        return Ok((moment_alpha, moment_alpha / mean));
    }

    let mut alpha = moment_alpha.max(1e-8);
    for _ in 0..NEWTON_MAX_ITER {
        let g = digamma(alpha) - alpha.ln() - target;
        if g.abs() <= NEWTON_TOL {
            return Ok((alpha, alpha / mean));
        }
        let slope = trigamma(alpha) - 1.0 / alpha;
        let mut next = alpha - g / slope;
        if next <= 0.0 {
            next = alpha * 0.5;
        }
        alpha = next;
    }
    Err(PmbmError::NonConvergence("gamma merge"))
}

/// Exact mean and covariance of a Gaussian mixture, including the
/// spread-of-means term.
pub fn gaussian_mixture_moments(components: &[(f64, GaussianDensity)]) -> Result<GaussianDensity> {
    if components.is_empty() {
        return Err(PmbmError::InvalidParameter(
            "gaussian_mixture_moments needs at least one component".into(),
        ));
    }
    if components.len() == 1 {
        return Ok(components[0].1.clone());
    }
    let total: f64 = components.iter().map(|c| c.0).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(PmbmError::InvalidParameter(
            "mixture weights must be positive".into(),
        ));
    }
    let n = components[0].1.dim();
    let mut mean = DVector::zeros(n);
    for (w, g) in components {
        mean += &g.mean * (*w / total);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (w, g) in components {
        let dev = &g.mean - &mean;
        cov += (&g.cov + &dev * dev.transpose()) * (*w / total);
    }
    Ok(GaussianDensity {
        mean,
        cov: symmetrize(&cov),
    })
}

/// Merges a GGIW mixture: Gamma part via [`gamma_merge`], Gaussian part via
/// [`gaussian_mixture_moments`], inverse-Wishart part matching the mixture
/// expected extent exactly and the mixture `E[ln|X|]` within `1e-10`.
pub fn ggiw_mixture_merge(components: &[(f64, GGIWParams)]) -> Result<GGIWParams> {
    if components.is_empty() {
        return Err(PmbmError::InvalidParameter(
            "ggiw_mixture_merge needs at least one component".into(),
        ));
    }
    if components.len() == 1 {
        return Ok(components[0].1.clone());
    }
    let d = components[0].1.extent_dim();
    if components.iter().any(|(_, z)| z.extent_dim() != d) {
        return Err(PmbmError::InvalidParameter(
            "mixed extent dimensions in GGIW merge".into(),
        ));
    }
    let total: f64 = components.iter().map(|c| c.0).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(PmbmError::InvalidParameter(
            "mixture weights must be positive".into(),
        ));
    }

    let gamma_parts: Vec<(f64, f64, f64)> = components
        .iter()
        .map(|(w, z)| (*w, z.alpha, z.beta))
        .collect();
    let (alpha, beta) = gamma_merge(&gamma_parts)?;

    let gaussian_parts: Vec<(f64, GaussianDensity)> = components
        .iter()
        .map(|(w, z)| {
            (
                *w,
                GaussianDensity {
                    mean: z.mean.clone(),
                    cov: z.cov.clone(),
                },
            )
        })
        .collect();
    let kin = gaussian_mixture_moments(&gaussian_parts)?;

    let d_f = d as f64;
    let floor = 2.0 * d_f + 2.0;
    let mut mean_extent = DMatrix::zeros(d, d);
    let mut mean_log_det = 0.0;
    for (w, z) in components {
        let w = *w / total;
        mean_extent += z.expected_extent()? * w;
        let mut log_det = spd_log_det(&z.scale, "GGIW merge scale")? - d_f * 2.0_f64.ln();
        for j in 1..=d {
            log_det -= digamma(0.5 * (z.dof - d_f - j as f64));
        }
        mean_log_det += w * log_det;
    }
    let log_det_mean_extent = spd_log_det(&mean_extent, "mixture expected extent")?;
    // solve d ln(v - 2d - 2) - sum_j psi((v - d - j)/2) = rhs
    let rhs = mean_log_det - log_det_mean_extent + d_f * 2.0_f64.ln();

    let mut dof = components.iter().map(|(w, z)| (*w / total) * z.dof).sum::<f64>();
    let lower = floor + 1e-9;
    dof = dof.max(lower + 1e-6);
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let mut g = d_f * (dof - floor).ln() - rhs;
        let mut slope = d_f / (dof - floor);
        for j in 1..=d {
            let arg = 0.5 * (dof - d_f - j as f64);
            g -= digamma(arg);
            slope -= 0.5 * trigamma(arg);
        }
        if g.abs() <= NEWTON_TOL {
            converged = true;
            break;
        }
        let mut next = dof - g / slope;
        if !next.is_finite() || next <= lower {
            next = 0.5 * (dof + lower);
        }
        dof = next;
    }
    if !converged {
        return Err(PmbmError::NonConvergence("inverse-Wishart merge"));
    }

    Ok(GGIWParams {
        alpha,
        beta,
        mean: kin.mean,
        cov: kin.cov,
        dof,
        scale: symmetrize(&(mean_extent * (dof - floor))),
    })
}
