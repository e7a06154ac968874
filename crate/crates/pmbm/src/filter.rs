//! The PMBM filtering recursion: prediction, the measurement update with
//! track-oriented hypothesis management, pruning, and the multi-Bernoulli
//! birth variant.
//!
//! All hypothesis weights are stored and combined in the log domain;
//! normalization goes through a max-shifted log-sum-exp. Global weights are
//! linear and normalized after every update and prune.

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assoc::{
    all_partitions, dbscan_partitions, gate_table, murty_kbest, unique_subsets, Cluster,
    CostMatrix, GateTable, Gating, Partition,
};
use crate::error::{PmbmError, Result};
use crate::hybrid::{
    GlobalHypothesis, HybridSingleTargetDensity, LocalHypothesis, PMBMDensity, PPPIntensity,
    Track, WeightedGaussian, WeightedGgiw,
};
use crate::models::{
    gamma_merge, gaussian_mixture_moments, ggiw_empty_log_likelihood, ggiw_mixture_merge,
    ggiw_predict, ggiw_update, kalman_predict, kalman_update, ExtendedMeasModel,
    GGIWPredictParams, PointMeasModel, PointMotionModel,
};
use crate::numeric::log_sum_exp;

/// Target birth process: either a PPP intensity appended to the undetected
/// intensity, or a multi-Bernoulli appended as new tracks (MBM variant,
/// which keeps the PPP empty).
#[derive(Debug, Clone)]
pub enum BirthModel {
    Ppp(PPPIntensity),
    MultiBernoulli(Vec<BernoulliBirth>),
}

#[derive(Debug, Clone)]
pub struct BernoulliBirth {
    pub existence: f64,
    pub density: HybridSingleTargetDensity,
}

/// Axis-aligned surveillance rectangle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Uniform clutter over the surveillance region.
#[derive(Debug, Clone)]
pub struct ClutterModel {
    /// Expected number of false alarms per scan.
    pub rate: f64,
    pub region: Region,
}

impl ClutterModel {
    /// Clutter intensity, `rate / area`, uniform over the region.
    pub fn intensity(&self) -> f64 {
        self.rate / self.region.area()
    }
}

/// Pruning thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PruneConfig {
    pub max_globals: usize,
    pub ppp_weight_min: f64,
    pub bernoulli_exist_min: f64,
    pub global_weight_min: f64,
}

/// Measurement models for the two target classes.
#[derive(Debug, Clone)]
pub struct SensorModels {
    pub point: PointMeasModel,
    pub extended: ExtendedMeasModel,
}

/// Source of the measurement partitions for the update.
#[derive(Debug, Clone)]
pub enum PartitionConfig {
    /// Single-linkage clustering over a grid of distance thresholds.
    Dbscan {
        eps_min: f64,
        eps_max: f64,
        eps_step: f64,
    },
    /// Every set partition; with [`Gating::None`] this makes the update
    /// exact. Only viable for small scenes.
    All,
}

#[derive(Debug, Clone)]
pub struct UpdateConfig {
    pub gating: Gating,
    pub partitions: PartitionConfig,
    pub prune: PruneConfig,
}

/// PMBM prediction: survival scaling, per-branch single-target prediction
/// and birth. The class probability of every Bernoulli is unchanged.
pub fn predict(
    post: &PMBMDensity,
    motion: &PointMotionModel,
    ggiw_params: &GGIWPredictParams,
    birth: &BirthModel,
) -> Result<PMBMDensity> {
    let survival = motion.survival;
    let mut ppp = PPPIntensity::default();
    for c in &post.ppp.point_components {
        ppp.point_components.push(WeightedGaussian {
            weight: c.weight * survival,
            gaussian: kalman_predict(&c.gaussian, motion)?,
        });
    }
    for c in &post.ppp.extended_components {
        ppp.extended_components.push(WeightedGgiw {
            weight: c.weight * survival,
            ggiw: ggiw_predict(&c.ggiw, motion, ggiw_params)?,
        });
    }

    let mut tracks = Vec::with_capacity(post.tracks.len());
    for track in &post.tracks {
        let mut hypotheses = Vec::with_capacity(track.hypotheses.len());
        for hyp in &track.hypotheses {
            let density = match &hyp.density {
                None => None,
                Some(d) => {
                    let point = match &d.point {
                        Some(g) => Some(kalman_predict(g, motion)?),
                        None => None,
                    };
                    let extended = match &d.extended {
                        Some(z) => Some(ggiw_predict(z, motion, ggiw_params)?),
                        None => None,
                    };
                    Some(HybridSingleTargetDensity {
                        point_prob: d.point_prob,
                        point,
                        extended,
                    })
                }
            };
            hypotheses.push(LocalHypothesis {
                log_weight: hyp.log_weight,
                existence: hyp.existence * survival,
                density,
                assoc_history: hyp.assoc_history.clone(),
            });
        }
        tracks.push(Track {
            id: track.id,
            hypotheses,
        });
    }

    let mut globals = post.globals.clone();
    let mut next_track_id = post.next_track_id;
    match birth {
        BirthModel::Ppp(b) => {
            ppp.point_components
                .extend(b.point_components.iter().cloned());
            ppp.extended_components
                .extend(b.extended_components.iter().cloned());
        }
        BirthModel::MultiBernoulli(births) => {
            for b in births {
                tracks.push(Track {
                    id: next_track_id,
                    hypotheses: vec![LocalHypothesis {
                        log_weight: 0.0,
                        existence: b.existence,
                        density: Some(b.density.clone()),
                        assoc_history: Vec::new(),
                    }],
                });
                next_track_id += 1;
                for g in &mut globals {
                    g.choice.push(0);
                }
            }
        }
    }

    Ok(PMBMDensity {
        step: post.step + 1,
        next_track_id,
        ppp,
        tracks,
        globals,
    })
}

/// PPP intensity update: point components keep their parameters with weight
/// scaled by the misdetection probability; each extended component splits
/// into a not-detected copy and a detected-but-empty copy (`beta + 1`).
/// Zero-weight copies are dropped.
pub fn update_ppp_intensity(ppp: &PPPIntensity, models: &SensorModels) -> PPPIntensity {
    let mut out = PPPIntensity::default();
    let miss_point = 1.0 - models.point.detection;
    for c in &ppp.point_components {
        let weight = c.weight * miss_point;
        if weight > 0.0 {
            out.point_components.push(WeightedGaussian {
                weight,
                gaussian: c.gaussian.clone(),
            });
        }
    }
    let p_d = models.extended.detection;
    for c in &ppp.extended_components {
        let not_detected = c.weight * (1.0 - p_d);
        if not_detected > 0.0 {
            out.extended_components.push(WeightedGgiw {
                weight: not_detected,
                ggiw: c.ggiw.clone(),
            });
        }
        let empty_lik = ggiw_empty_log_likelihood(&c.ggiw).exp();
        let detected_empty = c.weight * p_d * empty_lik;
        if detected_empty > 0.0 {
            let mut ggiw = c.ggiw.clone();
            ggiw.beta += 1.0;
            out.extended_components.push(WeightedGgiw {
                weight: detected_empty,
                ggiw,
            });
        }
    }
    out
}

/// Misdetection continuation of a local hypothesis.
pub fn bernoulli_misdetect(h: &LocalHypothesis, models: &SensorModels) -> Result<LocalHypothesis> {
    let Some(density) = &h.density else {
        // non-existence hypothesis: misdetection factor is one
        return Ok(h.clone());
    };
    let c = density.point_prob;
    let p1 = models.point.detection;
    let p2 = models.extended.detection;

    let ext_miss_lik = match &density.extended {
        Some(z) if c < 1.0 => 1.0 - p2 + p2 * ggiw_empty_log_likelihood(z).exp(),
        _ => 0.0,
    };
    let miss_lik = c * (1.0 - p1) + (1.0 - c) * ext_miss_lik;
    if miss_lik <= 0.0 {
        return Err(PmbmError::ZeroMisdetectionLikelihood);
    }

    let r = h.existence;
    let normalizer = 1.0 - r + r * miss_lik;
    let existence = r * miss_lik / normalizer;
    let point_prob = (1.0 - p1) * c / miss_lik;

    let point = if point_prob > 0.0 {
        density.point.clone()
    } else {
        None
    };
    let extended = if point_prob < 1.0 {
        let z = density
            .extended
            .as_ref()
            .expect("extended branch present when point_prob < 1");
        // two-term gamma mixture: not detected vs detected with an empty
        // measurement set; only the gamma factor differs between the terms
        let w_miss = (1.0 - p2) / ext_miss_lik;
        let mut merged = z.clone();
        if w_miss <= 0.0 {
            merged.beta += 1.0;
        } else if w_miss < 1.0 {
            let (alpha, beta) = gamma_merge(&[
                (w_miss, z.alpha, z.beta),
                (1.0 - w_miss, z.alpha, z.beta + 1.0),
            ])?;
            merged.alpha = alpha;
            merged.beta = beta;
        }
        Some(merged)
    } else {
        None
    };

    Ok(LocalHypothesis {
        log_weight: h.log_weight + normalizer.ln(),
        existence,
        density: Some(HybridSingleTargetDensity {
            point_prob,
            point,
            extended,
        }),
        assoc_history: h.assoc_history.clone(),
    })
}

/// Detection continuation of a local hypothesis with a measurement cluster.
/// Returns `None` when the hypothesis cannot generate the cluster (zero
/// prior existence or zero likelihood).
pub fn bernoulli_detect(
    h: &LocalHypothesis,
    cluster: &Cluster,
    measurements: &[DVector<f64>],
    models: &SensorModels,
    step: usize,
) -> Result<Option<LocalHypothesis>> {
    let Some(density) = &h.density else {
        return Ok(None);
    };
    if h.existence <= 0.0 {
        return Ok(None);
    }
    let c = density.point_prob;
    let p1 = models.point.detection;
    let p2 = models.extended.detection;
    let selected: Vec<DVector<f64>> = cluster
        .indices()
        .iter()
        .map(|&j| measurements[j].clone())
        .collect();

    // extended branch
    let mut log_ext = f64::NEG_INFINITY;
    let mut ext_posterior = None;
    if c < 1.0 && p2 > 0.0 {
        if let Some(z) = &density.extended {
            let (updated, log_lik) = ggiw_update(z, &selected, &models.extended)?;
            log_ext = (1.0 - c).ln() + p2.ln() + log_lik;
            ext_posterior = Some(updated);
        }
    }

    // point branch, singleton clusters only
    let mut log_point = f64::NEG_INFINITY;
    let mut point_posterior = None;
    if cluster.len() == 1 && c > 0.0 && p1 > 0.0 {
        if let Some(g) = &density.point {
            let (updated, log_lik) = kalman_update(g, &selected[0], &models.point)?;
            log_point = c.ln() + p1.ln() + log_lik;
            point_posterior = Some(updated);
        }
    }

    let log_total = log_sum_exp(&[log_point, log_ext]);
    if log_total == f64::NEG_INFINITY {
        return Ok(None);
    }
    let point_prob = (log_point - log_total).exp();

    let mut assoc_history = h.assoc_history.clone();
    for &j in cluster.indices() {
        assoc_history.push((step, j));
    }

    Ok(Some(LocalHypothesis {
        log_weight: h.log_weight + h.existence.ln() + log_total,
        existence: 1.0,
        density: Some(HybridSingleTargetDensity {
            point_prob,
            point: if point_prob > 0.0 { point_posterior } else { None },
            extended: if point_prob < 1.0 { ext_posterior } else { None },
        }),
        assoc_history,
    }))
}

/// A first-detection Bernoulli built from a measurement cluster and the PPP
/// intensity. A cluster without PPP support yields the pure-clutter limit:
/// finite weight (for singletons), existence zero and no density.
#[derive(Debug)]
pub struct NewBernoulli {
    pub log_weight: f64,
    pub hypothesis: LocalHypothesis,
}

/// Creates the new-Bernoulli local hypothesis for a cluster.
pub fn new_bernoulli(
    ppp: &PPPIntensity,
    cluster: &Cluster,
    measurements: &[DVector<f64>],
    clutter: &ClutterModel,
    models: &SensorModels,
    step: usize,
) -> Result<NewBernoulli> {
    let selected: Vec<DVector<f64>> = cluster
        .indices()
        .iter()
        .map(|&j| measurements[j].clone())
        .collect();
    let p1 = models.point.detection;
    let p2 = models.extended.detection;

    let mut point_terms: Vec<(f64, crate::hybrid::GaussianDensity)> = Vec::new();
    if cluster.len() == 1 && p1 > 0.0 {
        for c in &ppp.point_components {
            let (updated, log_lik) = kalman_update(&c.gaussian, &selected[0], &models.point)?;
            point_terms.push((c.weight.ln() + log_lik, updated));
        }
    }
    let mut ext_terms: Vec<(f64, crate::hybrid::GGIWParams)> = Vec::new();
    if p2 > 0.0 {
        for c in &ppp.extended_components {
            let (updated, log_lik) = ggiw_update(&c.ggiw, &selected, &models.extended)?;
            ext_terms.push((c.weight.ln() + log_lik, updated));
        }
    }

    let log_point_sum = if point_terms.is_empty() {
        f64::NEG_INFINITY
    } else {
        p1.ln() + log_sum_exp(&point_terms.iter().map(|t| t.0).collect::<Vec<_>>())
    };
    let log_ext_sum = if ext_terms.is_empty() {
        f64::NEG_INFINITY
    } else {
        p2.ln() + log_sum_exp(&ext_terms.iter().map(|t| t.0).collect::<Vec<_>>())
    };
    let log_lik_total = log_sum_exp(&[log_point_sum, log_ext_sum]);

    let log_clutter = if cluster.len() == 1 {
        clutter.intensity().ln()
    } else {
        f64::NEG_INFINITY
    };
    let log_weight = log_sum_exp(&[log_clutter, log_lik_total]);
    let assoc_history: Vec<(usize, usize)> =
        cluster.indices().iter().map(|&j| (step, j)).collect();

    if log_lik_total == f64::NEG_INFINITY {
        // pure-clutter limit: empty with probability one
        return Ok(NewBernoulli {
            log_weight,
            hypothesis: LocalHypothesis {
                log_weight,
                existence: 0.0,
                density: None,
                assoc_history,
            },
        });
    }

    let existence = (log_lik_total - log_weight).exp();
    let point_prob = (log_point_sum - log_lik_total).exp();

    let point = if point_prob > 0.0 {
        let max = point_terms
            .iter()
            .map(|t| t.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let weighted: Vec<(f64, crate::hybrid::GaussianDensity)> = point_terms
            .into_iter()
            .map(|(lw, g)| ((lw - max).exp(), g))
            .filter(|(w, _)| *w > 0.0)
            .collect();
        Some(gaussian_mixture_moments(&weighted)?)
    } else {
        None
    };
    let extended = if point_prob < 1.0 {
        let max = ext_terms
            .iter()
            .map(|t| t.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let weighted: Vec<(f64, crate::hybrid::GGIWParams)> = ext_terms
            .into_iter()
            .map(|(lw, z)| ((lw - max).exp(), z))
            .filter(|(w, _)| *w > 0.0)
            .collect();
        Some(ggiw_mixture_merge(&weighted)?)
    } else {
        None
    };

    Ok(NewBernoulli {
        log_weight,
        hypothesis: LocalHypothesis {
            log_weight,
            existence,
            density: Some(HybridSingleTargetDensity {
                point_prob,
                point,
                extended,
            }),
            assoc_history,
        },
    })
}

/// Fate of a measurement cluster when used as a new-target column: a track
/// whose second hypothesis is the built Bernoulli (pure-clutter ones have
/// existence zero), or infeasible.
#[allow(clippy::large_enum_variant)] // short-lived, one per subset per scan
enum NewEntry {
    Created {
        log_weight: f64,
        hypothesis: LocalHypothesis,
    },
    Infeasible,
}

impl NewEntry {
    fn cost(&self) -> f64 {
        match self {
            NewEntry::Created { log_weight, .. } => -log_weight,
            NewEntry::Infeasible => f64::INFINITY,
        }
    }
}

/// New Bernoullis are created for singletons inside the gate of any PPP
/// component, and for larger clusters lying entirely inside the gate of a
/// common extended PPP component.
fn cluster_admissible(table: &GateTable, cluster: &Cluster) -> bool {
    if cluster.len() == 1 {
        return table.any_ppp(cluster.indices()[0]);
    }
    table
        .ppp_extended
        .iter()
        .any(|mask| cluster.indices().iter().all(|&j| mask[j]))
}

fn build_new_entries(
    subsets: &[Cluster],
    table: &GateTable,
    ppp: &PPPIntensity,
    measurements: &[DVector<f64>],
    clutter: &ClutterModel,
    models: &SensorModels,
    step: usize,
) -> Result<Vec<NewEntry>> {
    subsets
        .iter()
        .map(|cluster| {
            if !cluster_admissible(table, cluster) {
                if cluster.len() > 1 {
                    return Ok(NewEntry::Infeasible);
                }
                // outside every PPP gate: clutter explanation only
                let log_weight = clutter.intensity().ln();
                return Ok(NewEntry::Created {
                    log_weight,
                    hypothesis: LocalHypothesis {
                        log_weight,
                        existence: 0.0,
                        density: None,
                        assoc_history: cluster.indices().iter().map(|&j| (step, j)).collect(),
                    },
                });
            }
            let built = new_bernoulli(ppp, cluster, measurements, clutter, models, step)?;
            Ok(if built.log_weight > f64::NEG_INFINITY {
                NewEntry::Created {
                    log_weight: built.log_weight,
                    hypothesis: built.hypothesis,
                }
            } else {
                NewEntry::Infeasible
            })
        })
        .collect()
}

/// One measurement update: gate, partition the Bernoulli-gated
/// measurements, build local hypothesis continuations, rank global
/// hypotheses with Murty's algorithm per (previous global, partition),
/// prune, then append the best-partition Bernoullis for the PPP-only
/// measurements to every global with weights unchanged.
pub fn update(
    pred: &PMBMDensity,
    measurements: &[DVector<f64>],
    models: &SensorModels,
    clutter: &ClutterModel,
    cfg: &UpdateConfig,
) -> Result<PMBMDensity> {
    let step = pred.step;
    let table = gate_table(
        pred,
        measurements,
        cfg.gating,
        &models.point,
        &models.extended,
    )?;

    let mut group1: Vec<usize> = Vec::new();
    let mut group2: Vec<usize> = Vec::new();
    for j in 0..measurements.len() {
        if table.bernoulli[j] {
            group1.push(j);
        } else if table.any_ppp(j) {
            group2.push(j);
        }
    }

    let make_partitions = |indices: &[usize]| -> Result<Vec<Partition>> {
        match &cfg.partitions {
            PartitionConfig::All => Ok(all_partitions(indices)),
            PartitionConfig::Dbscan {
                eps_min,
                eps_max,
                eps_step,
            } => {
                let local: Vec<DVector<f64>> =
                    indices.iter().map(|&j| measurements[j].clone()).collect();
                let parts = dbscan_partitions(&local, *eps_min, *eps_max, *eps_step)?;
                Ok(parts
                    .into_iter()
                    .map(|p| {
                        Partition::new(
                            p.clusters()
                                .iter()
                                .map(|c| {
                                    Cluster::new(c.indices().iter().map(|&l| indices[l]).collect())
                                })
                                .collect(),
                        )
                    })
                    .collect())
            }
        }
    };

    let partitions = make_partitions(&group1)?;
    let subsets = unique_subsets(&partitions);
    let subset_index: HashMap<Cluster, usize> = subsets
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();

    // continuations for previous tracks; detections only for clusters
    // inside the hypothesis gate
    let n_tracks = pred.tracks.len();
    let mut misdetects: Vec<Vec<LocalHypothesis>> = Vec::with_capacity(n_tracks);
    let mut detects: Vec<Vec<Vec<Option<LocalHypothesis>>>> = Vec::with_capacity(n_tracks);
    for (i, track) in pred.tracks.iter().enumerate() {
        let mut track_miss = Vec::with_capacity(track.hypotheses.len());
        let mut track_det = Vec::with_capacity(track.hypotheses.len());
        for (a, hyp) in track.hypotheses.iter().enumerate() {
            track_miss.push(bernoulli_misdetect(hyp, models)?);
            let mask = &table.track_hyp[i][a];
            let mut per_subset = Vec::with_capacity(subsets.len());
            for cluster in &subsets {
                let gated = cluster.indices().iter().all(|&j| mask[j]);
                per_subset.push(if gated {
                    bernoulli_detect(hyp, cluster, measurements, models, step)?
                } else {
                    None
                });
            }
            track_det.push(per_subset);
        }
        misdetects.push(track_miss);
        detects.push(track_det);
    }

    // new-Bernoulli entries per subset
    let new_entries = build_new_entries(
        &subsets,
        &table,
        &pred.ppp,
        measurements,
        clutter,
        models,
        step,
    )?;

    // harvest children: ranked assignments per (previous global, partition)
    struct Child {
        log_weight: f64,
        /// per previous track: (parent hypothesis, Option<subset index>)
        continuations: Vec<(usize, Option<usize>)>,
        /// subsets selected as new targets
        new_selected: Vec<usize>,
    }
    let mut children: Vec<Child> = Vec::new();

    for parent in &pred.globals {
        let murty_k = ((cfg.prune.max_globals as f64) * parent.weight)
            .ceil()
            .max(1.0) as usize;
        let mut base = parent.weight.ln();
        for (i, &a) in parent.choice.iter().enumerate() {
            base += misdetects[i][a].log_weight - pred.tracks[i].hypotheses[a].log_weight;
        }

        for partition in &partitions {
            let clusters = partition.clusters();
            let mut cost = CostMatrix::new(clusters.len(), n_tracks);
            for (row, cluster) in clusters.iter().enumerate() {
                let s = subset_index[cluster];
                for (i, &a) in parent.choice.iter().enumerate() {
                    if let Some(det) = &detects[i][a][s] {
                        if det.log_weight > f64::NEG_INFINITY {
                            cost.set_track_cost(
                                row,
                                i,
                                -(det.log_weight - misdetects[i][a].log_weight),
                            );
                        }
                    }
                }
                cost.set_new_cost(row, new_entries[s].cost());
            }

            let assignments = match murty_kbest(&cost, murty_k) {
                Ok(list) => list,
                Err(PmbmError::InfeasibleAssignment) => continue,
                Err(e) => return Err(e),
            };
            for assignment in assignments {
                let mut continuations: Vec<(usize, Option<usize>)> =
                    parent.choice.iter().map(|&a| (a, None)).collect();
                let mut new_selected = Vec::new();
                for (row, &col) in assignment.columns.iter().enumerate() {
                    let s = subset_index[&clusters[row]];
                    if cost.is_new_col(col) {
                        if matches!(new_entries[s], NewEntry::Created { .. }) {
                            new_selected.push(s);
                        }
                    } else {
                        continuations[col].1 = Some(s);
                    }
                }
                children.push(Child {
                    log_weight: base - assignment.total_cost,
                    continuations,
                    new_selected,
                });
            }
        }
    }

    if children.is_empty() {
        return Err(PmbmError::DegeneratePosterior);
    }

    // materialize the new hypothesis lists
    let mut tracks: Vec<Track> = pred
        .tracks
        .iter()
        .map(|t| Track {
            id: t.id,
            hypotheses: Vec::new(),
        })
        .collect();
    let mut hyp_index: Vec<HashMap<(usize, Option<usize>), usize>> =
        vec![HashMap::new(); n_tracks];
    let mut created_track_for_subset: HashMap<usize, usize> = HashMap::new();
    let mut next_track_id = pred.next_track_id;

    for (s, entry) in new_entries.iter().enumerate() {
        if let NewEntry::Created { hypothesis, .. } = entry {
            let track_pos = tracks.len();
            tracks.push(Track {
                id: next_track_id,
                hypotheses: vec![
                    LocalHypothesis {
                        log_weight: 0.0,
                        existence: 0.0,
                        density: None,
                        assoc_history: Vec::new(),
                    },
                    hypothesis.clone(),
                ],
            });
            next_track_id += 1;
            created_track_for_subset.insert(s, track_pos);
        }
    }

    let log_weights: Vec<f64> = children.iter().map(|c| c.log_weight).collect();
    let log_norm = log_sum_exp(&log_weights);
    if log_norm == f64::NEG_INFINITY {
        return Err(PmbmError::DegeneratePosterior);
    }
    let mut globals: Vec<GlobalHypothesis> = Vec::with_capacity(children.len());
    for child in &children {
        let mut choice = vec![0_usize; tracks.len()];
        for (i, &(a, subset)) in child.continuations.iter().enumerate() {
            let next = hyp_index[i].len();
            let idx = *hyp_index[i].entry((a, subset)).or_insert(next);
            if idx == tracks[i].hypotheses.len() {
                let hyp = match subset {
                    None => misdetects[i][a].clone(),
                    Some(s) => detects[i][a][s].clone().expect("selected detection exists"),
                };
                tracks[i].hypotheses.push(hyp);
            }
            choice[i] = idx;
        }
        for &s in &child.new_selected {
            choice[created_track_for_subset[&s]] = 1;
        }
        globals.push(GlobalHypothesis {
            weight: (child.log_weight - log_norm).exp(),
            choice,
        });
    }

    let posterior = PMBMDensity {
        step,
        next_track_id,
        ppp: update_ppp_intensity(&pred.ppp, models),
        tracks,
        globals,
    };

    // Before pruning, every global's current-time associations are pairwise
    // disjoint and cover exactly the Bernoulli-gated measurements.
    #[cfg(debug_assertions)]
    {
        let expected: std::collections::BTreeSet<usize> = group1.iter().copied().collect();
        for g in &posterior.globals {
            let mut seen = std::collections::BTreeSet::new();
            for (track, &a) in posterior.tracks.iter().zip(&g.choice) {
                for j in track.hypotheses[a].assoc_at(step) {
                    debug_assert!(seen.insert(j), "measurement {j} assigned twice");
                }
            }
            debug_assert_eq!(seen, expected, "global must cover the gated measurements");
        }
    }

    let mut posterior = prune(posterior, &cfg.prune)?;

    // PPP-only measurements: best partition only, appended to every global
    if !group2.is_empty() {
        let g2_partitions = make_partitions(&group2)?;
        let g2_subsets = unique_subsets(&g2_partitions);
        let g2_entries = build_new_entries(
            &g2_subsets,
            &table,
            &pred.ppp,
            measurements,
            clutter,
            models,
            step,
        )?;
        let g2_index: HashMap<Cluster, usize> = g2_subsets
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();

        let mut best: Option<(f64, &Partition)> = None;
        for p in &g2_partitions {
            let score: f64 = p
                .clusters()
                .iter()
                .map(|c| -g2_entries[g2_index[c]].cost())
                .sum();
            let better = match &best {
                None => true,
                Some((best_score, best_p)) => {
                    score > *best_score
                        || (score == *best_score && p.clusters() < best_p.clusters())
                }
            };
            if better {
                best = Some((score, p));
            }
        }

        if let Some((_, partition)) = best {
            for cluster in partition.clusters() {
                let s = g2_index[cluster];
                if let NewEntry::Created { hypothesis, .. } = &g2_entries[s] {
                    // zero-existence Bernoullis are empty with certainty
                    // and carry nothing
                    if hypothesis.existence <= 0.0 {
                        continue;
                    }
                    posterior.tracks.push(Track {
                        id: posterior.next_track_id,
                        hypotheses: vec![hypothesis.clone()],
                    });
                    posterior.next_track_id += 1;
                    for g in &mut posterior.globals {
                        g.choice.push(0);
                    }
                }
            }
        }
    }

    crate::hybrid::normalize_globals(posterior)
}

/// Pruning: PPP components below the weight floor, global hypotheses below
/// the weight floor and beyond the cap, tracks whose existence is
/// negligible in every surviving global, and unreferenced local hypotheses.
/// Weights are renormalized and per-track log weights rebased.
pub fn prune(post: PMBMDensity, cfg: &PruneConfig) -> Result<PMBMDensity> {
    let mut post = post;

    post.ppp
        .point_components
        .retain(|c| c.weight >= cfg.ppp_weight_min);
    post.ppp
        .extended_components
        .retain(|c| c.weight >= cfg.ppp_weight_min);

    // globals: zero weights always dropped, weight floor, cap by weight
    let mut order: Vec<usize> = (0..post.globals.len()).collect();
    order.sort_by(|&a, &b| post.globals[b].weight.total_cmp(&post.globals[a].weight));
    let mut keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| {
            post.globals[i].weight > 0.0 && post.globals[i].weight >= cfg.global_weight_min
        })
        .take(cfg.max_globals.max(1))
        .collect();
    if keep.is_empty() {
        // never return an empty posterior: keep the single best global
        let best = (0..post.globals.len())
            .max_by(|&a, &b| post.globals[a].weight.total_cmp(&post.globals[b].weight))
            .ok_or(PmbmError::DegeneratePosterior)?;
        keep.push(best);
    }
    keep.sort_unstable();
    let mut globals: Vec<GlobalHypothesis> =
        keep.into_iter().map(|i| post.globals[i].clone()).collect();

    // tracks to retain: maximum selected existence above the floor
    let mut track_keep = vec![false; post.tracks.len()];
    for g in &globals {
        for (i, &a) in g.choice.iter().enumerate() {
            if post.tracks[i].hypotheses[a].existence >= cfg.bernoulli_exist_min {
                track_keep[i] = true;
            }
        }
    }

    let mut tracks: Vec<Track> = Vec::new();
    let mut remap: Vec<Option<usize>> = vec![None; post.tracks.len()];
    for (i, track) in post.tracks.iter().enumerate() {
        if track_keep[i] {
            remap[i] = Some(tracks.len());
            tracks.push(track.clone());
        }
    }
    for g in &mut globals {
        let mut choice = Vec::with_capacity(tracks.len());
        for (i, &a) in g.choice.iter().enumerate() {
            if remap[i].is_some() {
                choice.push(a);
            }
        }
        g.choice = choice;
    }

    // merge globals that became identical after track removal
    let mut merged: Vec<GlobalHypothesis> = Vec::new();
    let mut by_choice: HashMap<Vec<usize>, usize> = HashMap::new();
    for g in globals {
        match by_choice.entry(g.choice.clone()) {
            std::collections::hash_map::Entry::Occupied(e) => {
                merged[*e.get()].weight += g.weight;
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(merged.len());
                merged.push(g);
            }
        }
    }
    let mut globals = merged;

    // drop unreferenced local hypotheses and reindex
    for (i, track) in tracks.iter_mut().enumerate() {
        let mut used: Vec<bool> = vec![false; track.hypotheses.len()];
        for g in &globals {
            used[g.choice[i]] = true;
        }
        let mut remap_hyp: Vec<Option<usize>> = vec![None; track.hypotheses.len()];
        let mut kept = Vec::new();
        for (a, hyp) in track.hypotheses.drain(..).enumerate() {
            if used[a] {
                remap_hyp[a] = Some(kept.len());
                kept.push(hyp);
            }
        }
        // rebase log weights so magnitudes stay near zero; a uniform shift
        // per track cancels in the global weight normalization
        let max_log = kept
            .iter()
            .map(|h| h.log_weight)
            .fold(f64::NEG_INFINITY, f64::max);
        if max_log.is_finite() {
            for h in &mut kept {
                h.log_weight -= max_log;
            }
        }
        track.hypotheses = kept;
        for g in &mut globals {
            g.choice[i] = remap_hyp[g.choice[i]].expect("selected hypothesis kept");
        }
    }

    post.tracks = tracks;
    post.globals = globals;
    crate::hybrid::normalize_globals(post)
}
