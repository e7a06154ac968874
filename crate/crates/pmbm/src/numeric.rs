//! Small numeric helpers: log-domain reductions, symmetric matrix square
//! roots and the special functions needed by the GGIW machinery.

use nalgebra::{DMatrix, DVector};

use crate::error::{PmbmError, Result};

/// Eigenvalues more negative than this are treated as a numerical failure;
/// eigenvalues in `[-PSD_CLAMP_TOL, 0]` are clamped to zero.
pub const PSD_CLAMP_TOL: f64 = 1e-10;

/// log(sum(exp(x))) with the max shifted out, so `-inf` entries are harmless.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Forces exact symmetry, `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric positive-semidefinite square root via eigendecomposition.
///
/// Eigenvalues below `-PSD_CLAMP_TOL` are an error; slightly negative ones
/// are clamped to zero.
pub fn sym_sqrt(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let eig = symmetrize(m).symmetric_eigen();
    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < -PSD_CLAMP_TOL {
            return Err(PmbmError::NotPositiveSemidefinite { context, value: ev });
        }
        roots[i] = ev.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&roots) * v.transpose())))
}

/// Cholesky-based solve returning `(m^-1 * b, ln|m|)` for SPD `m`.
pub fn spd_solve(
    m: &DMatrix<f64>,
    b: &DMatrix<f64>,
    context: &'static str,
) -> Result<(DMatrix<f64>, f64)> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or(PmbmError::SingularMatrix(context))?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok((chol.solve(b), log_det))
}

/// `ln|m|` for SPD `m`.
pub fn spd_log_det(m: &DMatrix<f64>, context: &'static str) -> Result<f64> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or(PmbmError::SingularMatrix(context))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Log of the multivariate gamma function `ln Γ_d(a)`.
pub fn ln_multigamma(d: usize, a: f64) -> f64 {
    let mut out = 0.25 * (d * (d - 1)) as f64 * std::f64::consts::PI.ln();
    for j in 1..=d {
        out += statrs::function::gamma::ln_gamma(a + 0.5 * (1 - j as i64) as f64);
    }
    out
}

/// Trigamma function `ψ'(x)` via the recurrence and asymptotic series.
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/(2x^2) + 1/(6x^3) - 1/(30x^5) + 1/(42x^7) - 1/(30x^9) + 5/(66x^11)
    acc + inv
        + 0.5 * inv2
        + inv2
            * inv
            * (1.0 / 6.0
                - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))))
}

/// Chi-square quantile, used for gating thresholds.
pub fn chi_square_quantile(dof: usize, p: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(dof as f64)
        .expect("chi-square dof must be positive")
        .inverse_cdf(p)
}
