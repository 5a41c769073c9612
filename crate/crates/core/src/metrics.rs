//! Scalar quality measures for a reconstruction.
//!
//! These are quantitative stand-ins for visual inspection of time series and
//! brain maps; any ranking they induce is this crate's own.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{SourceSpace, Vec3};

/// Per-node amplitude over time: the Euclidean norm of each node's three
/// components.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionSeries {
    /// `N × K`.
    pub amplitudes: DMatrix<f64>,
    pub positions: Vec<Vec3>,
    pub dt: f64,
}

impl ReconstructionSeries {
    pub fn n_nodes(&self) -> usize {
        self.amplitudes.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.amplitudes.ncols()
    }

    /// Amplitude time course of one node.
    pub fn course(&self, node: usize) -> Vec<f64> {
        self.amplitudes.row(node).iter().copied().collect()
    }

    /// Node with the largest amplitude at step `t`, lowest index on ties.
    pub fn argmax_node(&self, t: usize) -> usize {
        let col = self.amplitudes.column(t);
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if *v > col[best] {
                best = i;
            }
        }
        best
    }
}

pub fn amplitude_map(
    series: &[DVector<f64>],
    space: &SourceSpace,
    dt: f64,
) -> Result<ReconstructionSeries> {
    let n = space.len();
    let mut amplitudes = DMatrix::zeros(n, series.len());
    for (t, z) in series.iter().enumerate() {
        if z.len() != 3 * n {
            return Err(Error::invalid(format!(
                "state length {} at step {t} is not 3 x {n} nodes",
                z.len()
            )));
        }
        for j in 0..n {
            amplitudes[(j, t)] = z.rows(3 * j, 3).norm();
        }
    }
    Ok(ReconstructionSeries { amplitudes, positions: space.nodes().to_vec(), dt })
}

/// Distance in millimeters between `true_pos` and the peak node at `t`.
pub fn localization_error(recon: &ReconstructionSeries, t: usize, true_pos: &Vec3) -> Result<f64> {
    if t >= recon.n_steps() {
        return Err(Error::invalid(format!("step {t} out of range ({} steps)", recon.n_steps())));
    }
    let j = recon.argmax_node(t);
    Ok((recon.positions[j] - true_pos).norm() * 1e3)
}

/// Largest deep-region amplitude at the superficial peak divided by the same
/// at the deep peak. `None` when the denominator vanishes.
pub fn echo_ratio(
    recon: &ReconstructionSeries,
    deep_region: &[usize],
    t_deep: usize,
    t_sup: usize,
) -> Result<Option<f64>> {
    if deep_region.is_empty() {
        return Err(Error::invalid("deep region is empty"));
    }
    if t_deep >= recon.n_steps() || t_sup >= recon.n_steps() {
        return Err(Error::invalid("time index out of range"));
    }
    if let Some(bad) = deep_region.iter().find(|&&j| j >= recon.n_nodes()) {
        return Err(Error::invalid(format!("deep region node {bad} out of range")));
    }
    let peak = |t: usize| deep_region.iter().map(|&j| recon.amplitudes[(j, t)]).fold(0.0, f64::max);
    let denom = peak(t_deep);
    if !(denom > 0.0) {
        return Ok(None);
    }
    Ok(Some(peak(t_sup) / denom))
}

/// Pearson correlation of two equally long sequences; `None` when either is
/// constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn waveform_correlation(
    recon: &ReconstructionSeries,
    node: usize,
    truth: &[f64],
) -> Result<Option<f64>> {
    if node >= recon.n_nodes() {
        return Err(Error::invalid(format!("node {node} out of range")));
    }
    if truth.len() != recon.n_steps() {
        return Err(Error::invalid("truth length differs from the number of steps"));
    }
    if truth.iter().all(|v| *v == truth[0]) {
        return Err(Error::invalid("true waveform is constant"));
    }
    Ok(pearson(&recon.course(node), truth))
}

/// One run's scores. `None` marks an undefined metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub loc_err_deep_mm: f64,
    pub loc_err_sup_mm: f64,
    pub echo_ratio: Option<f64>,
    pub corr_deep: Option<f64>,
    pub corr_sup: Option<f64>,
    /// Localization error of the plain (unstandardized) mean at the deep peak.
    pub loc_err_deep_unstd_mm: f64,
    pub loc_err_sup_unstd_mm: f64,
}
