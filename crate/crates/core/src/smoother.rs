//! Rauch-Tung-Striebel fixed-interval smoother over a dense filter trajectory.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{standardize, weights_from_diagonal, FilterTrajectory, GaussianBelief};
use crate::linalg::{spd_factor, symmetrize_mut};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTrajectory {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    /// Smoother gains `G_t` for `t = 0..K-1`.
    pub gains: Vec<DMatrix<f64>>,
}

impl SmoothedTrajectory {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// One backward step: smooth `filtered` (time t) given the smoothed belief at t+1.
///
/// Returns the smoothed belief and the gain `G = P_{t|t} Aᵀ P_{t+1|t}⁻¹`.
pub fn rts_step(
    filtered: &GaussianBelief,
    next_smoothed: &GaussianBelief,
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<(GaussianBelief, DMatrix<f64>)> {
    let pred_mean = a * &filtered.mean;
    let a_p = a * &filtered.cov;
    let mut pred_cov = &a_p * a.transpose() + q;
    symmetrize_mut(&mut pred_cov);
    let chol = spd_factor(&pred_cov, "one-step predictive covariance")?;
    // Gᵀ = P_{t+1|t}⁻¹ A P_{t|t}
    let gain = chol.solve(&a_p).transpose();
    let mean = &filtered.mean + &gain * (&next_smoothed.mean - pred_mean);
    let mut cov = &filtered.cov + &gain * (&next_smoothed.cov - pred_cov) * gain.transpose();
    symmetrize_mut(&mut cov);
    Ok((GaussianBelief { mean, cov }, gain))
}

/// Backward pass. Predicted quantities are recomputed from the stored
/// filtered beliefs rather than read from the forward records.
pub fn rts_backward(traj: &FilterTrajectory) -> Result<SmoothedTrajectory> {
    let k = traj.len();
    if k == 0 {
        return Err(Error::invalid("empty filter trajectory"));
    }
    let a = &traj.model.transition;
    let q = &traj.model.process_noise;
    let mut means = vec![DVector::zeros(0); k];
    let mut covs = vec![DMatrix::zeros(0, 0); k];
    let mut gains = vec![DMatrix::zeros(0, 0); k - 1];
    let last = &traj.steps[k - 1].filtered;
    means[k - 1] = last.mean.clone();
    covs[k - 1] = last.cov.clone();
    let mut next = last.clone();
    for t in (0..k - 1).rev() {
        let (smoothed, gain) =
            rts_step(&traj.steps[t].filtered, &next, a, q).map_err(|e| e.at_step(t))?;
        means[t] = smoothed.mean.clone();
        covs[t] = smoothed.cov.clone();
        gains[t] = gain;
        next = smoothed;
    }
    Ok(SmoothedTrajectory { means, covs, gains })
}

/// Source of the standardization diagonal applied to smoothed means.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothedWeighting {
    /// Reuse the forward pass diagonal `diag(P⁻½ K S Kᵀ P⁻½)`.
    #[default]
    FilterPass,
    /// Use the smoothed variance reduction `diag(P⁻½ (P_{t|t-1} − P_t^s) P⁻½)`.
    SmoothedCovariance,
}

/// `z_t^s = W_t^(α) P_{t|t-1}^(-1/2) x_t^s` with the forward-pass weights.
pub fn standardize_smoothed(
    smoothed: &SmoothedTrajectory,
    traj: &FilterTrajectory,
    alpha: f64,
) -> Result<Vec<DVector<f64>>> {
    standardize_smoothed_with(smoothed, traj, alpha, SmoothedWeighting::FilterPass)
}

pub fn standardize_smoothed_with(
    smoothed: &SmoothedTrajectory,
    traj: &FilterTrajectory,
    alpha: f64,
    weighting: SmoothedWeighting,
) -> Result<Vec<DVector<f64>>> {
    if smoothed.len() != traj.len() {
        return Err(Error::invalid(format!(
            "smoothed length {} differs from filter length {}",
            smoothed.len(),
            traj.len()
        )));
    }
    traj.steps
        .iter()
        .zip(smoothed.means.iter().zip(&smoothed.covs))
        .enumerate()
        .map(|(t, (step, (mean, cov)))| {
            let diag = match weighting {
                SmoothedWeighting::FilterPass => step.std_diagonal.clone(),
                SmoothedWeighting::SmoothedCovariance => {
                    let reduction = &step.predicted.cov - cov;
                    let b = &step.pred_inv_sqrt * reduction * &step.pred_inv_sqrt;
                    b.diagonal()
                }
            };
            let w = weights_from_diagonal(&diag, alpha).map_err(|e| e.at_step(t))?;
            standardize(mean, &step.pred_inv_sqrt, &w)
        })
        .collect()
}
