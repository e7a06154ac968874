//! Target-set extraction from a PMBM posterior: take the highest-weight
//! global hypothesis, keep Bernoullis above an existence threshold, and emit
//! a point or extended estimate per the class probability.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PmbmError, Result};
use crate::gospa::Ellipse;
use crate::hybrid::PMBMDensity;

/// An extracted target: point (kinematics only) or extended (kinematics
/// plus expected extent).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetEstimate {
    Point {
        kinematics: Vec<f64>,
    },
    Extended {
        kinematics: Vec<f64>,
        extent: Vec<Vec<f64>>,
    },
}

impl TargetEstimate {
    pub fn kinematics(&self) -> DVector<f64> {
        match self {
            TargetEstimate::Point { kinematics } => DVector::from_vec(kinematics.clone()),
            TargetEstimate::Extended { kinematics, .. } => DVector::from_vec(kinematics.clone()),
        }
    }

    pub fn extent(&self) -> Option<DMatrix<f64>> {
        match self {
            TargetEstimate::Point { .. } => None,
            TargetEstimate::Extended { extent, .. } => {
                let d = extent.len();
                Some(DMatrix::from_fn(d, d, |i, j| extent[i][j]))
            }
        }
    }

    /// Projects the estimate into the base-metric space: position through
    /// the observation matrix, extent zero for points.
    pub fn ellipse(&self, obs_matrix: &DMatrix<f64>) -> Ellipse {
        let position = obs_matrix * self.kinematics();
        match self.extent() {
            None => Ellipse::point(position),
            Some(extent) => Ellipse { position, extent },
        }
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Extracts target estimates from the highest-weight global hypothesis.
/// Bernoullis with existence above `r_thresh` are reported; those with
/// point probability above `c_thresh` as points at the Gaussian mean,
/// otherwise as extended targets at the GGIW mean with extent
/// `scale / (dof - 2d - 2)`.
pub fn estimate(post: &PMBMDensity, r_thresh: f64, c_thresh: f64) -> Result<Vec<TargetEstimate>> {
    let Some(best) = post.best_global() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (track, &choice) in post.tracks.iter().zip(&best.choice) {
        let hyp = &track.hypotheses[choice];
        if hyp.existence <= r_thresh {
            continue;
        }
        let density = hyp.density.as_ref().ok_or_else(|| {
            PmbmError::InvalidParameter("existing Bernoulli without density".into())
        })?;
        if density.point_prob > c_thresh {
            let point = density.point.as_ref().ok_or_else(|| {
                PmbmError::InvalidParameter("point branch missing at positive point_prob".into())
            })?;
            out.push(TargetEstimate::Point {
                kinematics: point.mean.iter().copied().collect(),
            });
        } else {
            let ext = density.extended.as_ref().ok_or_else(|| {
                PmbmError::InvalidParameter(
                    "extended branch missing at positive extended probability".into(),
                )
            })?;
            let extent = ext.expected_extent()?;
            out.push(TargetEstimate::Extended {
                kinematics: ext.mean.iter().copied().collect(),
                extent: matrix_rows(&extent),
            });
        }
    }
    Ok(out)
}
