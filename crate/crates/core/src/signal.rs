//! Two-source evoked-response ground truth and noisy measurements.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{LeadField, SourceSpace, Vec3};

/// Conversion from the waveform amplitude unit (nA·m) to A·m.
pub const NANO_AMPERE_METER: f64 = 1e-9;

/// Locations and orientations of the deep and superficial sources.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePlacement {
    pub deep_node: usize,
    pub deep_moment_dir: Vec3,
    pub superficial_node: usize,
    pub superficial_moment_dir: Vec3,
}

impl SourcePlacement {
    pub fn new(
        space: &SourceSpace,
        deep_node: usize,
        deep_moment_dir: Vec3,
        superficial_node: usize,
        superficial_moment_dir: Vec3,
    ) -> Result<Self> {
        let n = space.len();
        if deep_node >= n || superficial_node >= n {
            return Err(Error::invalid(format!(
                "node index out of range (deep {deep_node}, superficial {superficial_node}, {n} nodes)"
            )));
        }
        if deep_node == superficial_node {
            return Err(Error::invalid("deep and superficial sources share a node"));
        }
        let depth = |j: usize| space.nodes()[j].norm();
        if !(depth(deep_node) < depth(superficial_node)) {
            return Err(Error::invalid(format!(
                "deep node radius {} is not below superficial node radius {}",
                depth(deep_node),
                depth(superficial_node)
            )));
        }
        for (name, d) in [("deep", &deep_moment_dir), ("superficial", &superficial_moment_dir)] {
            if (d.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("{name} moment direction is not a unit vector")));
            }
        }
        Ok(Self { deep_node, deep_moment_dir, superficial_node, superficial_moment_dir })
    }

    /// Snap target positions to their nearest nodes and normalize the moments.
    pub fn nearest(
        space: &SourceSpace,
        deep_target: &Vec3,
        deep_moment: &Vec3,
        superficial_target: &Vec3,
        superficial_moment: &Vec3,
    ) -> Result<Self> {
        let unit = |v: &Vec3| -> Result<Vec3> {
            v.try_normalize(0.0).ok_or_else(|| Error::invalid("zero moment direction"))
        };
        Self::new(
            space,
            space.nearest_node(deep_target),
            unit(deep_moment)?,
            space.nearest_node(superficial_target),
            unit(superficial_moment)?,
        )
    }
}

/// Which of the two sources are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActiveSources {
    Both,
    Deep,
    Superficial,
}

/// Sampled source time courses in nA·m, `t_k = k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceWaveforms {
    pub dt: f64,
    pub deep: Vec<f64>,
    pub superficial: Vec<f64>,
    pub amplitude_unit: &'static str,
}

impl SourceWaveforms {
    pub fn n_steps(&self) -> usize {
        self.deep.len()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_steps()).map(|k| k as f64 * self.dt).collect()
    }

    /// Copy with the inactive source silenced.
    pub fn only(&self, active: ActiveSources) -> Self {
        let mut out = self.clone();
        match active {
            ActiveSources::Both => {}
            ActiveSources::Deep => out.superficial.iter_mut().for_each(|v| *v = 0.0),
            ActiveSources::Superficial => out.deep.iter_mut().for_each(|v| *v = 0.0),
        }
        out
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.deep.iter().chain(&self.superficial).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Raised-cosine bump of full width `width` centred at `center`.
pub fn hann_bump(t: f64, center: f64, width: f64, amplitude: f64) -> f64 {
    let u = (t - center) / width;
    if u.abs() >= 0.5 {
        0.0
    } else {
        let c = (PI * u).cos();
        amplitude * c * c
    }
}

pub fn make_sep_waveforms(
    dt: f64,
    total_duration: f64,
    t_deep_peak: f64,
    t_sup_peak: f64,
    peak_width: f64,
    amplitude: f64,
) -> Result<SourceWaveforms> {
    if !(peak_width > 0.0) {
        return Err(Error::invalid(format!("peak width must be positive, got {peak_width}")));
    }
    if !(dt > 0.0 && dt <= peak_width / 4.0) {
        return Err(Error::invalid(format!("dt {dt} must lie in (0, peak_width/4]")));
    }
    if !(amplitude > 0.0) {
        return Err(Error::invalid(format!("amplitude must be positive, got {amplitude}")));
    }
    let slack = 1e-9 * total_duration;
    for (name, t) in [("deep", t_deep_peak), ("superficial", t_sup_peak)] {
        if !(t > 0.0 && t < total_duration) {
            return Err(Error::invalid(format!("{name} peak {t} outside (0, {total_duration})")));
        }
        if t - peak_width / 2.0 < -slack || t + peak_width / 2.0 > total_duration + slack {
            return Err(Error::invalid(format!(
                "{name} peak support [{}, {}] leaves [0, {total_duration}]",
                t - peak_width / 2.0,
                t + peak_width / 2.0
            )));
        }
    }
    let n_steps = (total_duration / dt).round() as usize;
    let sample = |center: f64| -> Vec<f64> {
        (0..n_steps).map(|k| hann_bump(k as f64 * dt, center, peak_width, amplitude)).collect()
    };
    Ok(SourceWaveforms {
        dt,
        deep: sample(t_deep_peak),
        superficial: sample(t_sup_peak),
        amplitude_unit: "nA·m",
    })
}

/// Clean scalp potentials (volts), one column per time step.
pub fn synthesize_measurements(
    lead: &LeadField,
    placement: &SourcePlacement,
    waves: &SourceWaveforms,
) -> Result<DMatrix<f64>> {
    let n = lead.n_nodes();
    if placement.deep_node >= n || placement.superficial_node >= n {
        return Err(Error::invalid("source node index out of range for the lead field"));
    }
    if waves.superficial.len() != waves.deep.len() {
        return Err(Error::invalid("waveform lengths differ"));
    }
    let deep_topo = lead.topography(placement.deep_node, &placement.deep_moment_dir);
    let sup_topo = lead.topography(placement.superficial_node, &placement.superficial_moment_dir);
    let mut clean = DMatrix::zeros(lead.n_electrodes(), waves.n_steps());
    for t in 0..waves.n_steps() {
        let col: DVector<f64> = &deep_topo * (waves.deep[t] * NANO_AMPERE_METER)
            + &sup_topo * (waves.superficial[t] * NANO_AMPERE_METER);
        clean.set_column(t, &col);
    }
    Ok(clean)
}

/// Clean and noisy measurements at a given peak-SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub clean: DMatrix<f64>,
    pub noisy: DMatrix<f64>,
    pub noise_std: f64,
    pub peak_snr_db: f64,
    pub seed: u64,
}

impl MeasurementSet {
    pub fn peak(&self) -> f64 {
        self.clean.amax()
    }

    /// Noise standard deviation in units of the clean-signal peak.
    pub fn relative_noise_std(&self) -> f64 {
        self.noise_std / self.peak()
    }
}

/// Add white Gaussian noise with `σ = max|clean| / 10^(peak_snr_db / 20)`.
///
/// Draws come from `ChaCha8Rng::seed_from_u64(seed)` through the standard
/// normal distribution, consumed in column-major order (electrode fastest).
pub fn add_noise(clean: &DMatrix<f64>, peak_snr_db: f64, seed: u64) -> Result<MeasurementSet> {
    let peak = clean.amax();
    if !(peak > 0.0) {
        return Err(Error::invalid("clean measurements are all zero; peak-SNR undefined"));
    }
    if !peak_snr_db.is_finite() {
        return Err(Error::invalid(format!("peak-SNR must be finite, got {peak_snr_db}")));
    }
    let noise_std = peak / 10f64.powf(peak_snr_db / 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = clean.clone();
    for v in noisy.iter_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += noise_std * e;
    }
    Ok(MeasurementSet { clean: clean.clone(), noisy, noise_std, peak_snr_db, seed })
}
