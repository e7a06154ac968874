//! Data association machinery: chi-square gating, DBSCAN-based partition
//! generation, unique-subset extraction and Murty's k-best ranked assignment.
//!
//! DBSCAN with a minimum region size of one degenerates to single-linkage
//! connected components, implemented as union-find over the epsilon
//! neighbourhood graph for determinism and speed.

use std::collections::BinaryHeap;
use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{PmbmError, Result};
use crate::hybrid::PMBMDensity;
use crate::models::{ExtendedMeasModel, PointMeasModel};
use crate::numeric::chi_square_quantile;

/// A set of measurement indices from the current scan, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cluster {
    indices: Vec<usize>,
}

impl Cluster {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        debug_assert!(!indices.is_empty());
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Pairwise-disjoint clusters covering an index set. Clusters are kept
/// sorted by their smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    clusters: Vec<Cluster>,
}

impl Partition {
    pub fn new(mut clusters: Vec<Cluster>) -> Self {
        clusters.sort();
        Self { clusters }
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// Checks disjointness and that the union equals `expected`.
    pub fn validate(&self, expected: &[usize]) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.clusters {
            for &i in c.indices() {
                if !seen.insert(i) {
                    return Err(PmbmError::InvalidParameter(format!(
                        "index {i} appears in two clusters"
                    )));
                }
            }
        }
        let expected: HashSet<usize> = expected.iter().copied().collect();
        if seen != expected {
            return Err(PmbmError::InvalidParameter(
                "partition does not cover the index set".into(),
            ));
        }
        Ok(())
    }
}

/// Gating configuration. `None` routes every measurement to the Bernoulli
/// group and treats every PPP component as gating everything; it exists so
/// the update can be run in its exact (enumeration) form.
#[derive(Debug, Clone, Copy)]
pub enum Gating {
    None,
    ChiSquare { gate_prob: f64 },
}

/// Output of [`gate`]: indices gated by at least one Bernoulli hypothesis,
/// indices gated only by PPP components, and discarded indices.
#[derive(Debug, Clone)]
pub struct GateResult {
    pub bernoulli_gated: Vec<usize>,
    pub ppp_only: Vec<usize>,
    pub discarded: Vec<usize>,
}

/// Per-component gating masks used by the filter update.
#[derive(Debug, Clone)]
pub struct GateTable {
    /// `bernoulli[j]`: measurement `j` in the gate of some Bernoulli
    /// hypothesis.
    pub bernoulli: Vec<bool>,
    /// `track_hyp[i][a][j]`: measurement `j` in the gate of hypothesis `a`
    /// of track `i` (either branch).
    pub track_hyp: Vec<Vec<Vec<bool>>>,
    /// `ppp_point[q][j]`: measurement `j` in the gate of point PPP
    /// component `q`.
    pub ppp_point: Vec<Vec<bool>>,
    /// `ppp_extended[q][j]`: measurement `j` in the gate of extended PPP
    /// component `q`.
    pub ppp_extended: Vec<Vec<bool>>,
}

impl GateTable {
    /// `true` when measurement `j` is inside the gate of any PPP component.
    pub fn any_ppp(&self, j: usize) -> bool {
        self.ppp_point.iter().any(|m| m[j]) || self.ppp_extended.iter().any(|m| m[j])
    }
}

fn mahalanobis_sq(z: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Option<f64> {
    let chol = cov.clone().cholesky()?;
    let res = z - mean;
    Some(res.dot(&chol.solve(&res)))
}

/// Builds the full gating table for a predicted density. A hybrid density
/// gates a measurement if either of its branches does; point branches use
/// `H P H^T + R`, extended branches `H P H^T + E[X]`.
pub fn gate_table(
    pred: &PMBMDensity,
    measurements: &[DVector<f64>],
    gating: Gating,
    point_m: &PointMeasModel,
    ext_m: &ExtendedMeasModel,
) -> Result<GateTable> {
    let m = measurements.len();
    let n_point = pred.ppp.point_components.len();
    let n_ext = pred.ppp.extended_components.len();

    let threshold = match gating {
        Gating::None => {
            return Ok(GateTable {
                bernoulli: vec![true; m],
                track_hyp: pred
                    .tracks
                    .iter()
                    .map(|t| vec![vec![true; m]; t.hypotheses.len()])
                    .collect(),
                ppp_point: vec![vec![true; m]; n_point],
                ppp_extended: vec![vec![true; m]; n_ext],
            })
        }
        Gating::ChiSquare { gate_prob } => {
            if !(0.0 < gate_prob && gate_prob < 1.0) {
                return Err(PmbmError::InvalidParameter(format!(
                    "gate probability {gate_prob} outside (0, 1)"
                )));
            }
            chi_square_quantile(point_m.obs_matrix.nrows(), gate_prob)
        }
    };

    let h1 = &point_m.obs_matrix;
    let h2 = &ext_m.obs_matrix;

    let gauss_gate = |mean: &DVector<f64>, cov: &DMatrix<f64>| -> Vec<bool> {
        let pred_mean = h1 * mean;
        let pred_cov = h1 * cov * h1.transpose() + &point_m.noise_cov;
        measurements
            .iter()
            .map(|z| mahalanobis_sq(z, &pred_mean, &pred_cov).is_some_and(|d| d <= threshold))
            .collect()
    };
    let ggiw_gate = |zeta: &crate::hybrid::GGIWParams| -> Result<Vec<bool>> {
        let pred_mean = h2 * &zeta.mean;
        let pred_cov = h2 * &zeta.cov * h2.transpose() + zeta.expected_extent()?;
        Ok(measurements
            .iter()
            .map(|z| mahalanobis_sq(z, &pred_mean, &pred_cov).is_some_and(|d| d <= threshold))
            .collect())
    };

    let mut bernoulli = vec![false; m];
    let mut track_hyp = Vec::with_capacity(pred.tracks.len());
    for track in &pred.tracks {
        let mut per_hyp = Vec::with_capacity(track.hypotheses.len());
        for hyp in &track.hypotheses {
            let mut mask = vec![false; m];
            if let Some(density) = &hyp.density {
                if let Some(point) = &density.point {
                    if density.point_prob > 0.0 {
                        for (j, hit) in
                            gauss_gate(&point.mean, &point.cov).into_iter().enumerate()
                        {
                            mask[j] = mask[j] || hit;
                        }
                    }
                }
                if let Some(ext) = &density.extended {
                    if density.point_prob < 1.0 {
                        for (j, hit) in ggiw_gate(ext)?.into_iter().enumerate() {
                            mask[j] = mask[j] || hit;
                        }
                    }
                }
            }
            for (j, &hit) in mask.iter().enumerate() {
                bernoulli[j] = bernoulli[j] || hit;
            }
            per_hyp.push(mask);
        }
        track_hyp.push(per_hyp);
    }

    let ppp_point = pred
        .ppp
        .point_components
        .iter()
        .map(|c| gauss_gate(&c.gaussian.mean, &c.gaussian.cov))
        .collect();
    let ppp_extended = pred
        .ppp
        .extended_components
        .iter()
        .map(|c| ggiw_gate(&c.ggiw))
        .collect::<Result<Vec<_>>>()?;

    Ok(GateTable {
        bernoulli,
        track_hyp,
        ppp_point,
        ppp_extended,
    })
}

/// Splits the measurement indices into Bernoulli-gated, PPP-only and
/// discarded groups.
pub fn gate(
    pred: &PMBMDensity,
    measurements: &[DVector<f64>],
    gate_prob: f64,
    point_m: &PointMeasModel,
    ext_m: &ExtendedMeasModel,
) -> Result<GateResult> {
    let table = gate_table(
        pred,
        measurements,
        Gating::ChiSquare { gate_prob },
        point_m,
        ext_m,
    )?;
    let mut out = GateResult {
        bernoulli_gated: Vec::new(),
        ppp_only: Vec::new(),
        discarded: Vec::new(),
    };
    for j in 0..measurements.len() {
        if table.bernoulli[j] {
            out.bernoulli_gated.push(j);
        } else if table.any_ppp(j) {
            out.ppp_only.push(j);
        } else {
            out.discarded.push(j);
        }
    }
    Ok(out)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Runs single-linkage clustering for every threshold on the grid
/// `eps_min, eps_min + eps_step, ..., eps_max` and returns the unique
/// partitions, ordered by threshold ascending with the first occurrence
/// kept. Cluster indices refer to positions in `measurements`.
pub fn dbscan_partitions(
    measurements: &[DVector<f64>],
    eps_min: f64,
    eps_max: f64,
    eps_step: f64,
) -> Result<Vec<Partition>> {
    if !(eps_min > 0.0 && eps_step > 0.0 && eps_max >= eps_min) {
        return Err(PmbmError::InvalidParameter(format!(
            "bad epsilon grid: min {eps_min}, max {eps_max}, step {eps_step}"
        )));
    }
    let n = measurements.len();
    if n == 0 {
        return Ok(vec![Partition::new(Vec::new())]);
    }

    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (&measurements[i] - &measurements[j]).norm();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let grid_len = ((eps_max - eps_min) / eps_step + 1e-9).floor() as usize + 1;
    let mut seen: HashSet<Vec<Cluster>> = HashSet::new();
    let mut out = Vec::new();
    for g in 0..grid_len {
        let eps = eps_min + g as f64 * eps_step;
        let mut uf = UnionFind::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if dist[i * n + j] <= eps {
                    uf.union(i, j);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let root = uf.find(i);
            groups[root].push(i);
        }
        let clusters: Vec<Cluster> = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(Cluster::new)
            .collect();
        let partition = Partition::new(clusters);
        if seen.insert(partition.clusters().to_vec()) {
            out.push(partition);
        }
    }
    Ok(out)
}

/// Enumerates every set partition of `indices` (restricted growth strings).
/// Exponential; intended for the exact update mode on small scenes.
pub fn all_partitions(indices: &[usize]) -> Vec<Partition> {
    let n = indices.len();
    if n == 0 {
        return vec![Partition::new(Vec::new())];
    }
    let mut out = Vec::new();
    let mut labels = vec![0_usize; n];
    fn recurse(labels: &mut Vec<usize>, pos: usize, max_label: usize, indices: &[usize], out: &mut Vec<Partition>) {
        if pos == indices.len() {
            let n_blocks = max_label + 1;
            let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
            for (i, &l) in labels.iter().enumerate() {
                blocks[l].push(indices[i]);
            }
            out.push(Partition::new(blocks.into_iter().map(Cluster::new).collect()));
            return;
        }
        for l in 0..=max_label + 1 {
            labels[pos] = l;
            recurse(labels, pos + 1, max_label.max(l), indices, out);
        }
    }
    labels[0] = 0;
    recurse(&mut labels, 1, 0, indices, &mut out);
    out
}

/// Deduplicated union of all clusters across the partitions, in first-seen
/// order.
pub fn unique_subsets(partitions: &[Partition]) -> Vec<Cluster> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in partitions {
        for c in p.clusters() {
            if seen.insert(c.clone()) {
                out.push(c.clone());
            }
        }
    }
    out
}

/// Cost matrix for ranked assignment. Rows are measurement clusters;
/// columns are one per track (usable at most once) plus one dedicated
/// new-target/clutter column per row. Entries are negative log weights.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    n_rows: usize,
    n_track_cols: usize,
    track_costs: Vec<f64>,
    new_costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n_rows: usize, n_track_cols: usize) -> Self {
        Self {
            n_rows,
            n_track_cols,
            track_costs: vec![f64::INFINITY; n_rows * n_track_cols],
            new_costs: vec![f64::INFINITY; n_rows],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_track_cols(&self) -> usize {
        self.n_track_cols
    }

    /// Total number of columns, track columns first, then one new-target
    /// column per row.
    pub fn n_cols(&self) -> usize {
        self.n_track_cols + self.n_rows
    }

    pub fn set_track_cost(&mut self, row: usize, col: usize, cost: f64) {
        self.track_costs[row * self.n_track_cols + col] = cost;
    }

    pub fn set_new_cost(&mut self, row: usize, cost: f64) {
        self.new_costs[row] = cost;
    }

    pub fn cost(&self, row: usize, col: usize) -> f64 {
        if col < self.n_track_cols {
            self.track_costs[row * self.n_track_cols + col]
        } else if col - self.n_track_cols == row {
            self.new_costs[row]
        } else {
            f64::INFINITY
        }
    }

    /// `true` when `col` is a new-target column.
    pub fn is_new_col(&self, col: usize) -> bool {
        col >= self.n_track_cols
    }
}

/// One row-to-column assignment with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `columns[row]` is the column assigned to `row`.
    pub columns: Vec<usize>,
    pub total_cost: f64,
}

/// Shortest-augmenting-path solve of the rectangular assignment problem
/// (`nr <= nc`), minimizing total cost over full row assignments. Infinite
/// entries are forbidden. Returns `columns[row]` and the total, or `None`
/// when no feasible assignment exists.
pub(crate) fn lap_min<F: Fn(usize, usize) -> f64>(
    nr: usize,
    nc: usize,
    entry: F,
) -> Option<(Vec<usize>, f64)> {
    if nr == 0 {
        return Some((Vec::new(), 0.0));
    }
    if nr > nc {
        return None;
    }

    // column potentials and matching; slot 0 is a virtual entry point
    let mut u = vec![0.0_f64; nr + 1];
    let mut v = vec![0.0_f64; nc + 1];
    let mut matched_row = vec![usize::MAX; nc + 1]; // column -> row (1-based rows)
    let mut way = vec![0_usize; nc + 1];

    for i in 1..=nr {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; nc + 1];
        let mut used = vec![false; nc + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=nc {
                if used[j] {
                    continue;
                }
                let cur = entry(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_to[j] {
                    min_to[j] = cur;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            if !delta.is_finite() {
                return None;
            }
            for j in 0..=nc {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == usize::MAX {
                break;
            }
        }
        // augment along the found path
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut columns = vec![usize::MAX; nr];
    let mut total = 0.0;
    for (j, &i) in matched_row.iter().enumerate().skip(1) {
        if i != usize::MAX && i > 0 {
            columns[i - 1] = j - 1;
            total += entry(i - 1, j - 1);
        }
    }
    if columns.contains(&usize::MAX) || !total.is_finite() {
        return None;
    }
    Some((columns, total))
}

/// Dispatch of [`lap_min`] for a [`CostMatrix`] restricted to the given
/// rows/columns with extra forbidden pairs.
fn solve_lap(
    cost: &CostMatrix,
    rows: &[usize],
    cols: &[usize],
    forbidden: &[(usize, usize)],
) -> Option<(Vec<usize>, f64)> {
    let entry = |ri: usize, ci: usize| -> f64 {
        let (r, c) = (rows[ri], cols[ci]);
        if forbidden.iter().any(|&(fr, fc)| fr == r && fc == c) {
            f64::INFINITY
        } else {
            cost.cost(r, c)
        }
    };
    let (cols_local, total) = lap_min(rows.len(), cols.len(), entry)?;
    Some((cols_local.iter().map(|&ci| cols[ci]).collect(), total))
}

fn solve_constrained(
    cost: &CostMatrix,
    forced: &[usize],
    forbidden: &[(usize, usize)],
) -> Option<Assignment> {
    let n_rows = cost.n_rows();
    let free_rows: Vec<usize> = (forced.len()..n_rows).collect();
    let used: HashSet<usize> = forced.iter().copied().collect();
    let free_cols: Vec<usize> = (0..cost.n_cols()).filter(|c| !used.contains(c)).collect();

    let (free_assign, _) = solve_lap(cost, &free_rows, &free_cols, forbidden)?;
    let mut columns = forced.to_vec();
    columns.extend(free_assign);
    let total: f64 = columns
        .iter()
        .enumerate()
        .map(|(r, &c)| cost.cost(r, c))
        .sum();
    if !total.is_finite() {
        return None;
    }
    Some(Assignment {
        columns,
        total_cost: total,
    })
}

struct MurtyNode {
    forced: Vec<usize>,
    forbidden: Vec<(usize, usize)>,
    solution: Assignment,
}

impl PartialEq for MurtyNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for MurtyNode {}
impl PartialOrd for MurtyNode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for MurtyNode {
    // reversed so the BinaryHeap pops the cheapest node; cost ties broken
    // lexicographically on the assignment for reproducibility
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .solution
            .total_cost
            .total_cmp(&self.solution.total_cost)
            .then_with(|| other.solution.columns.cmp(&self.solution.columns))
    }
}

/// Returns up to `k` lowest-cost assignments in nondecreasing cost order,
/// or an error when no feasible assignment exists.
pub fn murty_kbest(cost: &CostMatrix, k: usize) -> Result<Vec<Assignment>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let best = solve_constrained(cost, &[], &[]).ok_or(PmbmError::InfeasibleAssignment)?;
    let mut heap = BinaryHeap::new();
    heap.push(MurtyNode {
        forced: Vec::new(),
        forbidden: Vec::new(),
        solution: best,
    });

    let mut out: Vec<Assignment> = Vec::with_capacity(k.min(64));
    while let Some(node) = heap.pop() {
        out.push(node.solution.clone());
        if out.len() >= k {
            break;
        }
        for t in node.forced.len()..cost.n_rows() {
            let forced: Vec<usize> = node.solution.columns[..t].to_vec();
            let mut forbidden = node.forbidden.clone();
            forbidden.push((t, node.solution.columns[t]));
            if let Some(solution) = solve_constrained(cost, &forced, &forbidden) {
                heap.push(MurtyNode {
                    forced,
                    forbidden,
                    solution,
                });
            }
        }
    }
    Ok(out)
}
