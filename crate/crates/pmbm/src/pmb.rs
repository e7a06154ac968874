//! Track-oriented projection of a PMBM onto a Poisson multi-Bernoulli:
//! marginalize the global hypothesis weights per track, collapse each track
//! to a single Bernoulli by moment matching, keep the PPP untouched.

use crate::error::{PmbmError, Result};
use crate::hybrid::{
    GlobalHypothesis, HybridSingleTargetDensity, LocalHypothesis, PMBMDensity, Track,
};
use crate::models::{gaussian_mixture_moments, ggiw_mixture_merge};

/// Per-track, per-local-hypothesis marginal weights: the sum of the weights
/// of the globals selecting that hypothesis. Each track's weights sum to
/// one (hypotheses unreferenced by any global get zero).
#[derive(Debug, Clone)]
pub struct MarginalWeights {
    per_track: Vec<Vec<f64>>,
}

impl MarginalWeights {
    pub fn track(&self, i: usize) -> &[f64] {
        &self.per_track[i]
    }
}

/// Marginalizes normalized global weights over each track's hypotheses.
pub fn marginal_weights(post: &PMBMDensity) -> MarginalWeights {
    let mut per_track: Vec<Vec<f64>> = post
        .tracks
        .iter()
        .map(|t| vec![0.0; t.hypotheses.len()])
        .collect();
    for g in &post.globals {
        for (i, &a) in g.choice.iter().enumerate() {
            per_track[i][a] += g.weight;
        }
    }
    MarginalWeights { per_track }
}

/// Projects the posterior onto a PMB: one Bernoulli per track with
/// existence `r_i = sum_a w_a r_a`, class probability
/// `c_i = sum_a w_a r_a c_a / r_i`, Gaussian branch moment-matched with
/// weights proportional to `w r c`, GGIW branch with weights proportional
/// to `w r (1 - c)`. The PPP part is untouched and exactly one global
/// hypothesis remains. Tracks with `r_i` at or below `exist_min` are
/// dropped.
pub fn pmb_project(post: &PMBMDensity, exist_min: f64) -> Result<PMBMDensity> {
    let marginals = marginal_weights(post);
    let mut tracks: Vec<Track> = Vec::with_capacity(post.tracks.len());

    for (i, track) in post.tracks.iter().enumerate() {
        let weights = marginals.track(i);
        let mut existence = 0.0;
        let mut point_mass = 0.0;
        for (hyp, &w) in track.hypotheses.iter().zip(weights) {
            existence += w * hyp.existence;
            if let Some(d) = &hyp.density {
                point_mass += w * hyp.existence * d.point_prob;
            }
        }
        if existence <= 0.0 || existence < exist_min {
            continue;
        }
        let point_prob = point_mass / existence;

        let mut gaussian_parts = Vec::new();
        let mut ggiw_parts = Vec::new();
        for (hyp, &w) in track.hypotheses.iter().zip(weights) {
            let Some(d) = &hyp.density else { continue };
            let point_w = w * hyp.existence * d.point_prob;
            if point_w > 0.0 {
                let g = d.point.as_ref().ok_or_else(|| {
                    PmbmError::InvalidParameter("point branch missing in projection".into())
                })?;
                gaussian_parts.push((point_w, g.clone()));
            }
            let ext_w = w * hyp.existence * (1.0 - d.point_prob);
            if ext_w > 0.0 {
                let z = d.extended.as_ref().ok_or_else(|| {
                    PmbmError::InvalidParameter("extended branch missing in projection".into())
                })?;
                ggiw_parts.push((ext_w, z.clone()));
            }
        }
        let point = if gaussian_parts.is_empty() {
            None
        } else {
            Some(gaussian_mixture_moments(&gaussian_parts)?)
        };
        let extended = if ggiw_parts.is_empty() {
            None
        } else {
            Some(ggiw_mixture_merge(&ggiw_parts)?)
        };

        // keep the history of the hypothesis with the largest marginal
        let best_hyp = (0..track.hypotheses.len())
            .max_by(|&a, &b| weights[a].total_cmp(&weights[b]))
            .expect("nonempty hypothesis list");

        tracks.push(Track {
            id: track.id,
            hypotheses: vec![LocalHypothesis {
                log_weight: 0.0,
                existence,
                density: Some(HybridSingleTargetDensity {
                    point_prob,
                    point,
                    extended,
                }),
                assoc_history: track.hypotheses[best_hyp].assoc_history.clone(),
            }],
        });
    }

    let choice = vec![0; tracks.len()];
    Ok(PMBMDensity {
        step: post.step,
        next_track_id: post.next_track_id,
        ppp: post.ppp.clone(),
        tracks,
        globals: vec![GlobalHypothesis {
            weight: 1.0,
            choice,
        }],
    })
}
