//! Experiment configuration (TOML).
//!
//! Every section and key is optional except that the sweep grids must be
//! non-empty once defaults are applied. Unknown keys are rejected.
//!
//! ```toml
//! output_dir = "out"
//!
//! [geometry]
//! scalp_radius = 0.09      # m
//! brain_radius = 0.078     # m
//! conductivity = 0.33      # S/m
//! electrodes = 64
//! node_spacing = 0.012     # m
//!
//! [signal]
//! timing = "close"         # "close": peaks 1.5 / 2.5 ms, "wide": 1.0 / 3.0 ms
//! dt = 1e-4                # s
//! total_duration = 4e-3    # s
//! peak_width = 2e-3        # s
//! amplitude = 10.0         # nA·m
//! active = "both"          # "both" | "deep" | "superficial"
//! deep_target = [-0.024, 0.0, 0.012]
//! deep_moment = [0.0, 0.0, 1.0]
//! superficial_target = [-0.036, 0.0, 0.06]
//! superficial_moment = [0.0, 1.0, 0.0]
//!
//! [sweep]
//! ep_snr_db = [0.0, 20.0]
//! pm_snr_db = [0.0, 20.0]
//! noise_db = [10.0, 20.0, 30.0]
//! alpha = [0.5, 1.0, 1.25, 1.5]
//! smoothing = [false, true]
//! repetitions = 5
//! base_seed = 20250101
//! smoothed_weighting = "filter_pass"   # or "smoothed_covariance"
//!
//! [metrics]
//! deep_region_radius = 0.015   # m
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ActiveSources;
use crate::smoother::SmoothedWeighting;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub scalp_radius: f64,
    pub brain_radius: f64,
    pub conductivity: f64,
    pub electrodes: usize,
    pub node_spacing: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            scalp_radius: 0.09,
            brain_radius: 0.078,
            conductivity: 0.33,
            electrodes: 64,
            node_spacing: 0.012,
        }
    }
}

/// Peak timing variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timing {
    /// Deep peak at 1.5 ms, superficial at 2.5 ms.
    Close,
    /// Peaks 2 ms apart at 1.0 ms and 3.0 ms.
    Wide,
}

impl Timing {
    /// `(deep, superficial)` peak times in seconds.
    pub fn peaks(self) -> (f64, f64) {
        match self {
            Timing::Close => (1.5e-3, 2.5e-3),
            Timing::Wide => (1.0e-3, 3.0e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub timing: Timing,
    pub dt: f64,
    pub total_duration: f64,
    pub peak_width: f64,
    pub amplitude: f64,
    pub active: ActiveSources,
    pub deep_target: [f64; 3],
    pub deep_moment: [f64; 3],
    pub superficial_target: [f64; 3],
    pub superficial_moment: [f64; 3],
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            timing: Timing::Close,
            dt: 1e-4,
            total_duration: 4e-3,
            peak_width: 2e-3,
            amplitude: 10.0,
            active: ActiveSources::Both,
            deep_target: [-0.024, 0.0, 0.012],
            deep_moment: [0.0, 0.0, 1.0],
            superficial_target: [-0.036, 0.0, 0.06],
            superficial_moment: [0.0, 1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ep_snr_db: Vec<f64>,
    pub pm_snr_db: Vec<f64>,
    pub noise_db: Vec<f64>,
    pub alpha: Vec<f64>,
    pub smoothing: Vec<bool>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub smoothed_weighting: SmoothedWeighting,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ep_snr_db: vec![0.0, 20.0],
            pm_snr_db: vec![0.0, 20.0],
            noise_db: vec![10.0, 20.0, 30.0],
            alpha: vec![0.5, 1.0, 1.25, 1.5],
            smoothing: vec![false, true],
            repetitions: 5,
            base_seed: 20250101,
            smoothed_weighting: SmoothedWeighting::FilterPass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub deep_region_radius: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { deep_region_radius: 0.015 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub geometry: GeometryConfig,
    pub signal: SignalConfig,
    pub sweep: SweepConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            geometry: GeometryConfig::default(),
            signal: SignalConfig::default(),
            sweep: SweepConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), reason: reason.into() }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be a positive finite number, got {v}")))
    }
}

fn finite_grid(key: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(bad(key, "grid must not be empty"));
    }
    if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
        return Err(bad(key, format!("non-finite entry {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        positive("geometry.scalp_radius", g.scalp_radius)?;
        positive("geometry.brain_radius", g.brain_radius)?;
        positive("geometry.conductivity", g.conductivity)?;
        positive("geometry.node_spacing", g.node_spacing)?;
        if g.brain_radius >= g.scalp_radius {
            return Err(bad("geometry.brain_radius", "must be smaller than scalp_radius"));
        }
        if g.node_spacing >= g.brain_radius {
            return Err(bad("geometry.node_spacing", "must be smaller than brain_radius"));
        }
        if g.electrodes < 2 {
            return Err(bad("geometry.electrodes", "at least 2 electrodes are required"));
        }
        let s = &self.signal;
        positive("signal.dt", s.dt)?;
        positive("signal.total_duration", s.total_duration)?;
        positive("signal.peak_width", s.peak_width)?;
        positive("signal.amplitude", s.amplitude)?;
        let w = &self.sweep;
        finite_grid("sweep.ep_snr_db", &w.ep_snr_db)?;
        finite_grid("sweep.pm_snr_db", &w.pm_snr_db)?;
        finite_grid("sweep.noise_db", &w.noise_db)?;
        finite_grid("sweep.alpha", &w.alpha)?;
        if let Some(a) = w.alpha.iter().find(|a| **a <= 0.0) {
            return Err(bad("sweep.alpha", format!("exponents must be positive, got {a}")));
        }
        if w.smoothing.is_empty() {
            return Err(bad("sweep.smoothing", "grid must not be empty"));
        }
        if w.repetitions < 1 {
            return Err(bad("sweep.repetitions", "must be at least 1"));
        }
        positive("metrics.deep_region_radius", self.metrics.deep_region_radius)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let key = e.message().split('`').nth(1).unwrap_or("<document>").to_string();
            Error::Config { key, reason: e.to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml_str(&text)
}
