//! GOSPA scoring with a Gaussian-Wasserstein base metric over position and
//! extent. Point targets enter the base metric as extended targets with
//! extent zero; velocities are excluded.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assoc::lap_min;
use crate::error::{PmbmError, Result};
use crate::numeric::sym_sqrt;

/// Position plus (possibly zero) extent, the operand of the base metric.
#[derive(Debug, Clone)]
pub struct Ellipse {
    pub position: DVector<f64>,
    pub extent: DMatrix<f64>,
}

impl Ellipse {
    pub fn point(position: DVector<f64>) -> Self {
        let d = position.len();
        Self {
            position,
            extent: DMatrix::zeros(d, d),
        }
    }
}

/// GOSPA total and its decomposition. With `p = 2` and the decomposition
/// form, `total^2 = localization^2 + missed_cost^2 + false_cost^2`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GospaResult {
    pub total: f64,
    pub localization: f64,
    pub missed_cost: f64,
    pub false_cost: f64,
}

/// Gaussian-Wasserstein distance between two position/extent pairs:
/// `GW^2 = |p_a - p_b|^2 + tr(X_a + X_b - 2 (X_a^1/2 X_b X_a^1/2)^1/2)`.
pub fn gaussian_wasserstein(a: &Ellipse, b: &Ellipse) -> Result<f64> {
    if a.position.len() != b.position.len() {
        return Err(PmbmError::DimensionMismatch {
            expected: a.position.len(),
            got: b.position.len(),
        });
    }
    let pos_sq = (&a.position - &b.position).norm_squared();
    let root_a = sym_sqrt(&a.extent, "Wasserstein extent")?;
    let cross = sym_sqrt(&(&root_a * &b.extent * &root_a), "Wasserstein cross term")?;
    let trace = (&a.extent + &b.extent - cross * 2.0).trace();
    Ok((pos_sq + trace).max(0.0).sqrt())
}

/// GOSPA metric between an estimate set and a truth set via optimal partial
/// assignment on the cutoff-truncated base metric. Requires the
/// decomposition form `alpha = 2`.
pub fn gospa(
    estimates: &[Ellipse],
    truth: &[Ellipse],
    cutoff: f64,
    order: f64,
    alpha: f64,
) -> Result<GospaResult> {
    if alpha != 2.0 {
        return Err(PmbmError::InvalidParameter(format!(
            "GOSPA decomposition requires alpha = 2, got {alpha}"
        )));
    }
    if !(cutoff > 0.0 && order >= 1.0) {
        return Err(PmbmError::InvalidParameter(format!(
            "GOSPA needs cutoff > 0 and order >= 1, got c={cutoff}, p={order}"
        )));
    }

    let n_truth = truth.len();
    let n_est = estimates.len();
    if n_truth == 0 && n_est == 0 {
        return Ok(GospaResult::default());
    }

    // truncated base-metric matrix, truth rows x estimate columns
    let mut dist = vec![0.0; n_truth * n_est];
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in estimates.iter().enumerate() {
            dist[i * n_est + j] = gaussian_wasserstein(t, e)?;
        }
    }
    let truncated = |i: usize, j: usize| dist[i * n_est + j].min(cutoff).powf(order);

    // a full matching of the smaller side is optimal once pairs at the
    // cutoff are cut afterwards (cutting is cost-neutral at the optimum)
    let matching: Vec<(usize, usize)> = if n_truth <= n_est {
        let (cols, _) = lap_min(n_truth, n_est, truncated)
            .expect("finite truncated costs are always feasible");
        cols.into_iter().enumerate().collect()
    } else {
        let (rows, _) = lap_min(n_est, n_truth, |j, i| truncated(i, j))
            .expect("finite truncated costs are always feasible");
        rows.into_iter().enumerate().map(|(j, i)| (i, j)).collect()
    };

    let mut loc_p = 0.0;
    let mut matched_below_cutoff = 0;
    for &(i, j) in &matching {
        let d = dist[i * n_est + j];
        if d < cutoff {
            loc_p += d.powf(order);
            matched_below_cutoff += 1;
        }
    }
    let half_cut_p = 0.5 * cutoff.powf(order);
    let missed_p = half_cut_p * (n_truth - matched_below_cutoff) as f64;
    let false_p = half_cut_p * (n_est - matched_below_cutoff) as f64;

    let inv = 1.0 / order;
    Ok(GospaResult {
        total: (loc_p + missed_p + false_p).powf(inv),
        localization: loc_p.powf(inv),
        missed_cost: missed_p.powf(inv),
        false_cost: false_p.powf(inv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(x: f64, y: f64) -> Ellipse {
        Ellipse::point(DVector::from_vec(vec![x, y]))
    }

    fn ell(x: f64, y: f64, extent: DMatrix<f64>) -> Ellipse {
        Ellipse {
            position: DVector::from_vec(vec![x, y]),
            extent,
        }
    }

    #[test]
    fn wasserstein_identical_is_zero() {
        let a = ell(1.0, 2.0, DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]));
        assert_relative_eq!(gaussian_wasserstein(&a, &a).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn wasserstein_two_points_is_euclidean() {
        let d = gaussian_wasserstein(&pt(0.0, 0.0), &pt(3.0, 4.0)).unwrap();
        assert_relative_eq!(d, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn wasserstein_point_vs_ellipse_same_position() {
        let e = ell(1.0, 1.0, DMatrix::identity(2, 2) * 4.0);
        let d = gaussian_wasserstein(&pt(1.0, 1.0), &e).unwrap();
        assert_relative_eq!(d, 8.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn wasserstein_is_symmetric() {
        let a = ell(0.0, 0.0, DMatrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 4.0]));
        let b = ell(3.0, -1.0, DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]));
        let ab = gaussian_wasserstein(&a, &b).unwrap();
        let ba = gaussian_wasserstein(&b, &a).unwrap();
        assert_relative_eq!(ab, ba, epsilon = 1e-10);
        assert!(ab > 0.0);
    }

    #[test]
    fn gospa_empty_sets() {
        let r = gospa(&[], &[], 10.0, 2.0, 2.0).unwrap();
        assert_eq!(r.total, 0.0);
        assert_eq!(r.localization, 0.0);
        assert_eq!(r.missed_cost, 0.0);
        assert_eq!(r.false_cost, 0.0);
    }

    #[test]
    fn gospa_single_missed_target() {
        let r = gospa(&[], &[pt(0.0, 0.0)], 10.0, 2.0, 2.0).unwrap();
        assert_relative_eq!(r.total, (100.0_f64 / 2.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r.missed_cost, r.total, epsilon = 1e-12);
        assert_eq!(r.localization, 0.0);
        assert_eq!(r.false_cost, 0.0);
    }

    #[test]
    fn gospa_single_pair_is_localization_only() {
        let r = gospa(&[pt(3.0, 0.0)], &[pt(0.0, 0.0)], 10.0, 2.0, 2.0).unwrap();
        assert_relative_eq!(r.total, 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.localization, 3.0, epsilon = 1e-12);
        assert_eq!(r.missed_cost, 0.0);
        assert_eq!(r.false_cost, 0.0);
    }

    #[test]
    fn gospa_identical_sets_is_zero_and_symmetric() {
        let set = vec![pt(1.0, 2.0), ell(5.0, 5.0, DMatrix::identity(2, 2))];
        let r = gospa(&set, &set, 10.0, 2.0, 2.0).unwrap();
        assert_relative_eq!(r.total, 0.0, epsilon = 1e-9);

        let other = vec![pt(0.0, 0.0)];
        let fwd = gospa(&set, &other, 10.0, 2.0, 2.0).unwrap();
        let bwd = gospa(&other, &set, 10.0, 2.0, 2.0).unwrap();
        assert_relative_eq!(fwd.total, bwd.total, epsilon = 1e-12);
        // exchanging the sets swaps missed and false costs
        assert_relative_eq!(fwd.missed_cost, bwd.false_cost, epsilon = 1e-12);
        assert_relative_eq!(fwd.false_cost, bwd.missed_cost, epsilon = 1e-12);
    }

    #[test]
    fn gospa_decomposition_identity() {
        let est = vec![pt(0.0, 0.0), pt(20.0, 0.0), pt(-5.0, 2.0)];
        let tru = vec![pt(1.0, 0.0), pt(100.0, 100.0)];
        let r = gospa(&est, &tru, 10.0, 2.0, 2.0).unwrap();
        let lhs = r.total.powi(2);
        let rhs = r.localization.powi(2) + r.missed_cost.powi(2) + r.false_cost.powi(2);
        assert!((lhs - rhs).abs() <= 1e-9);
    }

    #[test]
    fn gospa_rejects_other_alpha() {
        assert!(gospa(&[], &[], 10.0, 2.0, 1.0).is_err());
    }
}
