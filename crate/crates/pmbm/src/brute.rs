//! Slow reference implementations used by the test suites: exhaustive
//! enumeration of the single-step posterior over all measurement partitions
//! and associations, a classical point-target-only update, brute-force
//! GOSPA matching, assignment enumeration and BFS connected components.
//!
//! These deliberately avoid the production association path (gating,
//! union-find clustering, Murty's algorithm, log-domain bookkeeping); they
//! compose the single-target primitives directly in the linear domain.

use nalgebra::DVector;

use crate::assoc::{Assignment, CostMatrix};
use crate::error::Result;
use crate::filter::{ClutterModel, SensorModels};
use crate::gospa::{gaussian_wasserstein, Ellipse};
use crate::hybrid::{GaussianDensity, HybridSingleTargetDensity, PPPIntensity};
use crate::models::{ggiw_update, kalman_update, PointMeasModel};

/// Connected components of the epsilon-neighbourhood graph via BFS,
/// independent of the union-find implementation. Returns sorted clusters
/// of positions into `points`.
pub fn connected_components(points: &[DVector<f64>], eps: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut visited = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut queue = vec![start];
        visited[start] = true;
        let mut component = Vec::new();
        while let Some(i) = queue.pop() {
            component.push(i);
            for j in 0..n {
                if !visited[j] && (&points[i] - &points[j]).norm() <= eps {
                    visited[j] = true;
                    queue.push(j);
                }
            }
        }
        component.sort_unstable();
        out.push(component);
    }
    out.sort();
    out
}

/// All feasible assignments of a [`CostMatrix`], sorted by total cost then
/// lexicographically by columns.
pub fn enumerate_assignments(cost: &CostMatrix) -> Vec<Assignment> {
    let mut out = Vec::new();
    let mut columns = vec![0_usize; cost.n_rows()];
    let mut used = vec![false; cost.n_cols()];
    fn recurse(
        cost: &CostMatrix,
        row: usize,
        total: f64,
        columns: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Assignment>,
    ) {
        if row == cost.n_rows() {
            out.push(Assignment {
                columns: columns.clone(),
                total_cost: total,
            });
            return;
        }
        for col in 0..cost.n_cols() {
            if used[col] {
                continue;
            }
            let c = cost.cost(row, col);
            if !c.is_finite() {
                continue;
            }
            used[col] = true;
            columns[row] = col;
            recurse(cost, row + 1, total + c, columns, used, out);
            used[col] = false;
        }
    }
    recurse(cost, 0, 0.0, &mut columns, &mut used, &mut out);
    out.sort_by(|a, b| {
        a.total_cost
            .total_cmp(&b.total_cost)
            .then_with(|| a.columns.cmp(&b.columns))
    });
    out
}

/// Minimum GOSPA total over all partial matchings, straight from the
/// definition (no truncation trick, no Hungarian solve).
pub fn gospa_min_total(
    estimates: &[Ellipse],
    truth: &[Ellipse],
    cutoff: f64,
    order: f64,
) -> Result<f64> {
    let n_est = estimates.len();
    let mut dist = vec![0.0; truth.len() * n_est.max(1)];
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in estimates.iter().enumerate() {
            dist[i * n_est + j] = gaussian_wasserstein(t, e)?;
        }
    }
    let half_cut = 0.5 * cutoff.powf(order);

    fn recurse(
        truth_idx: usize,
        used: u32,
        truth_len: usize,
        n_est: usize,
        dist: &[f64],
        order: f64,
        half_cut: f64,
    ) -> f64 {
        if truth_idx == truth_len {
            let unmatched_est = n_est - (used.count_ones() as usize);
            return half_cut * unmatched_est as f64;
        }
        // leave this truth unmatched
        let mut best = half_cut
            + recurse(
                truth_idx + 1,
                used,
                truth_len,
                n_est,
                dist,
                order,
                half_cut,
            );
        for j in 0..n_est {
            if used & (1 << j) != 0 {
                continue;
            }
            let cost = dist[truth_idx * n_est + j].powf(order)
                + recurse(
                    truth_idx + 1,
                    used | (1 << j),
                    truth_len,
                    n_est,
                    dist,
                    order,
                    half_cut,
                );
            if cost < best {
                best = cost;
            }
        }
        best
    }

    let total_p = recurse(0, 0, truth.len(), n_est, &dist, order, half_cut);
    Ok(total_p.powf(1.0 / order))
}

/// Set partitions of `indices`, enumerated by choosing the first element's
/// block mates and recursing (a different algorithm from the restricted
/// growth strings used by the association module).
pub fn partitions_of(indices: &[usize]) -> Vec<Vec<Vec<usize>>> {
    if indices.is_empty() {
        return vec![Vec::new()];
    }
    let first = indices[0];
    let rest = &indices[1..];
    let mut out = Vec::new();
    for mask in 0_u32..(1 << rest.len()) {
        let mut block = vec![first];
        let mut remaining = Vec::new();
        for (i, &x) in rest.iter().enumerate() {
            if mask & (1 << i) != 0 {
                block.push(x);
            } else {
                remaining.push(x);
            }
        }
        for sub in partitions_of(&remaining) {
            let mut p = vec![block.clone()];
            p.extend(sub);
            out.push(p);
        }
    }
    out
}

/// A one-step scene: PPP prior, at most one prior Bernoulli, and the
/// measurements of the current scan.
#[derive(Debug, Clone)]
pub struct MicroScene {
    pub ppp: PPPIntensity,
    /// `(existence, density)` of the single prior Bernoulli, if any.
    pub prior: Option<(f64, HybridSingleTargetDensity)>,
    pub measurements: Vec<DVector<f64>>,
    pub models: SensorModels,
    pub clutter: ClutterModel,
    pub step: usize,
}

/// One Bernoulli of an enumerated posterior global hypothesis.
#[derive(Debug, Clone)]
pub struct OracleBernoulli {
    /// Sorted measurement indices associated at the current step.
    pub current: Vec<usize>,
    /// Index of the prior Bernoulli this entry continues, `None` for new
    /// Bernoullis.
    pub prior_index: Option<usize>,
    pub existence: f64,
    pub point_prob: f64,
}

/// One enumerated global hypothesis with normalized weight.
#[derive(Debug, Clone)]
pub struct OracleGlobal {
    pub weight: f64,
    pub bernoullis: Vec<OracleBernoulli>,
}

fn subset_from_mask(mask: u32, m: usize) -> Vec<usize> {
    (0..m).filter(|j| mask & (1 << j) != 0).collect()
}

/// Linear-domain likelihood of a prior hybrid density generating exactly
/// the measurement set `w`; returns `(likelihood, point_part)`.
fn hybrid_set_likelihood(
    density: &HybridSingleTargetDensity,
    w: &[usize],
    measurements: &[DVector<f64>],
    models: &SensorModels,
) -> Result<(f64, f64)> {
    let c = density.point_prob;
    let p1 = models.point.detection;
    let p2 = models.extended.detection;
    let selected: Vec<DVector<f64>> = w.iter().map(|&j| measurements[j].clone()).collect();

    let mut point_part = 0.0;
    if w.len() == 1 && c > 0.0 {
        if let Some(g) = &density.point {
            let (_, log_lik) = kalman_update(g, &selected[0], &models.point)?;
            point_part = c * p1 * log_lik.exp();
        }
    }
    let mut ext_part = 0.0;
    if c < 1.0 {
        if let Some(z) = &density.extended {
            let (_, log_lik) = ggiw_update(z, &selected, &models.extended)?;
            ext_part = (1.0 - c) * p2 * log_lik.exp();
        }
    }
    Ok((point_part + ext_part, point_part))
}

/// Linear-domain likelihood of the PPP intensity generating exactly the
/// measurement set `w`; returns `(likelihood, point_part)`.
fn ppp_set_likelihood(
    ppp: &PPPIntensity,
    w: &[usize],
    measurements: &[DVector<f64>],
    models: &SensorModels,
) -> Result<(f64, f64)> {
    let p1 = models.point.detection;
    let p2 = models.extended.detection;
    let selected: Vec<DVector<f64>> = w.iter().map(|&j| measurements[j].clone()).collect();

    let mut point_part = 0.0;
    if w.len() == 1 {
        for c in &ppp.point_components {
            let (_, log_lik) = kalman_update(&c.gaussian, &selected[0], &models.point)?;
            point_part += p1 * c.weight * log_lik.exp();
        }
    }
    let mut ext_part = 0.0;
    for c in &ppp.extended_components {
        let (_, log_lik) = ggiw_update(&c.ggiw, &selected, &models.extended)?;
        ext_part += p2 * c.weight * log_lik.exp();
    }
    Ok((point_part + ext_part, point_part))
}

/// Exhaustive single-step posterior: enumerate the subset assigned to the
/// prior Bernoulli, then every partition of the remaining measurements
/// into new-Bernoulli blocks, weighting each global from first principles.
pub fn exhaustive_update(scene: &MicroScene) -> Result<Vec<OracleGlobal>> {
    let m = scene.measurements.len();
    let models = &scene.models;
    let p1 = models.point.detection;
    let p2 = models.extended.detection;
    let lambda_c = scene.clutter.intensity();

    let prior_masks: Vec<u32> = if scene.prior.is_some() {
        (0..(1_u32 << m)).collect()
    } else {
        vec![0]
    };

    let mut globals = Vec::new();
    let mut total_weight = 0.0;
    for &mask in &prior_masks {
        let assigned = subset_from_mask(mask, m);
        let mut weight = 1.0;
        let mut bernoullis = Vec::new();

        if let Some((r, density)) = &scene.prior {
            if assigned.is_empty() {
                // misdetection
                let c = density.point_prob;
                let empty_ext = match &density.extended {
                    Some(z) if c < 1.0 => {
                        1.0 - p2 + p2 * (z.beta / (z.beta + 1.0)).powf(z.alpha)
                    }
                    _ => 0.0,
                };
                let miss_lik = c * (1.0 - p1) + (1.0 - c) * empty_ext;
                let w = 1.0 - r + r * miss_lik;
                weight *= w;
                if w > 0.0 {
                    bernoullis.push(OracleBernoulli {
                        current: Vec::new(),
                        prior_index: Some(0),
                        existence: r * miss_lik / w,
                        point_prob: if miss_lik > 0.0 {
                            (1.0 - p1) * c / miss_lik
                        } else {
                            0.0
                        },
                    });
                }
            } else {
                let (lik, point_part) =
                    hybrid_set_likelihood(density, &assigned, &scene.measurements, models)?;
                weight *= r * lik;
                if lik > 0.0 {
                    bernoullis.push(OracleBernoulli {
                        current: assigned.clone(),
                        prior_index: Some(0),
                        existence: 1.0,
                        point_prob: point_part / lik,
                    });
                }
            }
        }
        if weight == 0.0 {
            continue;
        }

        let remaining: Vec<usize> = (0..m).filter(|j| mask & (1 << j) == 0).collect();
        for partition in partitions_of(&remaining) {
            let mut w_total = weight;
            let mut blocks = bernoullis.clone();
            for block in &partition {
                let (lik, point_part) =
                    ppp_set_likelihood(&scene.ppp, block, &scene.measurements, models)?;
                let clutter_part = if block.len() == 1 { lambda_c } else { 0.0 };
                let w_new = clutter_part + lik;
                w_total *= w_new;
                if w_total == 0.0 {
                    break;
                }
                blocks.push(OracleBernoulli {
                    current: block.clone(),
                    prior_index: None,
                    existence: lik / w_new,
                    point_prob: if lik > 0.0 { point_part / lik } else { 0.0 },
                });
            }
            if w_total > 0.0 {
                total_weight += w_total;
                globals.push(OracleGlobal {
                    weight: w_total,
                    bernoullis: blocks,
                });
            }
        }
    }

    for g in &mut globals {
        g.weight /= total_weight;
    }
    Ok(globals)
}

/// A point-target-only scene: Gaussian Bernoullis, Gaussian PPP.
#[derive(Debug, Clone)]
pub struct PointScene {
    pub ppp: Vec<(f64, GaussianDensity)>,
    pub bernoullis: Vec<(f64, GaussianDensity)>,
    pub measurements: Vec<DVector<f64>>,
    pub meas_model: PointMeasModel,
    pub clutter_intensity: f64,
}

/// Classical point-target PMBM single-step update by direct enumeration of
/// measurement-to-track assignment functions (at most one measurement per
/// track, no partitions, no ranked assignment).
pub fn point_only_update(scene: &PointScene) -> Result<Vec<OracleGlobal>> {
    let m = scene.measurements.len();
    let n = scene.bernoullis.len();
    let p_d = scene.meas_model.detection;

    // likelihood tables
    let mut track_lik = vec![vec![0.0; m]; n];
    for (t, (_, g)) in scene.bernoullis.iter().enumerate() {
        for (j, z) in scene.measurements.iter().enumerate() {
            let (_, log_lik) = kalman_update(g, z, &scene.meas_model)?;
            track_lik[t][j] = log_lik.exp();
        }
    }
    let mut new_lik = vec![0.0; m];
    for (j, z) in scene.measurements.iter().enumerate() {
        for (w, g) in &scene.ppp {
            let (_, log_lik) = kalman_update(g, z, &scene.meas_model)?;
            new_lik[j] += p_d * w * log_lik.exp();
        }
    }

    // enumerate assignment functions measurement -> None (new/clutter) or
    // Some(track), tracks used at most once
    let mut globals = Vec::new();
    let mut total_weight = 0.0;
    let mut assignment: Vec<Option<usize>> = vec![None; m];

    fn recurse(
        j: usize,
        m: usize,
        n: usize,
        used: &mut Vec<bool>,
        assignment: &mut Vec<Option<usize>>,
        visit: &mut dyn FnMut(&[Option<usize>]),
    ) {
        if j == m {
            visit(assignment);
            return;
        }
        assignment[j] = None;
        recurse(j + 1, m, n, used, assignment, visit);
        for t in 0..n {
            if used[t] {
                continue;
            }
            used[t] = true;
            assignment[j] = Some(t);
            recurse(j + 1, m, n, used, assignment, visit);
            used[t] = false;
            assignment[j] = None;
        }
    }

    let mut used = vec![false; n];
    let mut visit = |assignment: &[Option<usize>]| {
        let mut weight = 1.0;
        let mut bernoullis = Vec::new();
        for (t, (r, _)) in scene.bernoullis.iter().enumerate() {
            match assignment.iter().position(|&a| a == Some(t)) {
                Some(j) => {
                    weight *= r * p_d * track_lik[t][j];
                    bernoullis.push(OracleBernoulli {
                        current: vec![j],
                        prior_index: Some(t),
                        existence: 1.0,
                        point_prob: 1.0,
                    });
                }
                None => {
                    let miss = 1.0 - r + r * (1.0 - p_d);
                    weight *= miss;
                    bernoullis.push(OracleBernoulli {
                        current: Vec::new(),
                        prior_index: Some(t),
                        existence: r * (1.0 - p_d) / miss,
                        point_prob: 1.0,
                    });
                }
            }
        }
        for (j, a) in assignment.iter().enumerate() {
            if a.is_none() {
                let w_new = scene.clutter_intensity + new_lik[j];
                weight *= w_new;
                bernoullis.push(OracleBernoulli {
                    current: vec![j],
                    prior_index: None,
                    existence: new_lik[j] / w_new,
                    point_prob: 1.0,
                });
            }
        }
        if weight > 0.0 {
            total_weight += weight;
            globals.push(OracleGlobal {
                weight,
                bernoullis,
            });
        }
    };
    recurse(0, m, n, &mut used, &mut assignment, &mut visit);

    for g in &mut globals {
        g.weight /= total_weight;
    }
    Ok(globals)
}
