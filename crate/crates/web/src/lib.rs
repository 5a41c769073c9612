//! WebAssembly bindings for the browser demo.
//!
//! Every method returns a JSON string so the page can stay plain JavaScript.
//! The [`Demo`] type is also usable natively, which is how it is tested.

use serde::Serialize;
use skf_core::config::ExperimentConfig;
use skf_core::experiment::measurement_seed;
use skf_core::pipeline::{Scenario, ScoredRun};
use skf_core::signal::ActiveSources;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Metrics {
    loc_err_deep_mm: f64,
    loc_err_sup_mm: f64,
    loc_err_deep_unstd_mm: f64,
    loc_err_sup_unstd_mm: f64,
    echo_ratio: Option<f64>,
    corr_deep: Option<f64>,
    corr_sup: Option<f64>,
}

#[derive(Serialize)]
struct Courses {
    times_ms: Vec<f64>,
    deep_true: Vec<f64>,
    sup_true: Vec<f64>,
    deep_est: Vec<f64>,
    sup_est: Vec<f64>,
    t_deep: usize,
    t_sup: usize,
    theta0: f64,
    tau_sq: f64,
    metrics: Metrics,
}

#[derive(Serialize)]
struct SliceMap {
    step: usize,
    spacing_mm: f64,
    radius_mm: f64,
    /// `[x_mm, z_mm, normalized amplitude]` for nodes in the coronal plane.
    points: Vec<[f64; 3]>,
    peak: [f64; 2],
    deep: [f64; 2],
    sup: [f64; 2],
}

#[derive(Serialize)]
struct PriorTable {
    noise_db: f64,
    sigma: f64,
    rows: Vec<PriorRow>,
}

#[derive(Serialize)]
struct PriorRow {
    ep_snr_db: f64,
    pm_snr_db: f64,
    theta0: f64,
    tau_sq: f64,
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let peak = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        v.iter().map(|x| x / peak).collect()
    } else {
        v.to_vec()
    }
}

#[wasm_bindgen]
pub struct Demo {
    scenario: Scenario,
}

#[wasm_bindgen]
impl Demo {
    /// Build the default head model. `active` is "both", "deep" or "superficial".
    #[wasm_bindgen(constructor)]
    pub fn new(node_spacing_mm: f64, active: &str) -> Result<Demo, JsError> {
        let mut cfg = ExperimentConfig::default();
        cfg.geometry.node_spacing = node_spacing_mm * 1e-3;
        cfg.signal.active = match active {
            "deep" => ActiveSources::Deep,
            "superficial" => ActiveSources::Superficial,
            "both" => ActiveSources::Both,
            other => return Err(JsError::new(&format!("unknown source selection {other:?}"))),
        };
        Ok(Demo { scenario: Scenario::build(&cfg).map_err(js_err)? })
    }

    #[wasm_bindgen(js_name = nodeCount)]
    pub fn node_count(&self) -> usize {
        self.scenario.space.len()
    }

    #[wasm_bindgen(js_name = stepCount)]
    pub fn step_count(&self) -> usize {
        self.scenario.n_steps()
    }

    /// True and reconstructed time courses at the two source nodes.
    pub fn courses(
        &self,
        ep: f64,
        pm: f64,
        noise: f64,
        alpha: f64,
        smoothing: bool,
        rep: usize,
    ) -> Result<String, JsError> {
        let (scored, theta0, tau_sq) = self.score(ep, pm, noise, alpha, smoothing, rep)?;
        let scn = &self.scenario;
        let (deep, sup) = scored.source_courses(scn);
        let m = scored.report;
        let dt_ms = scn.config.signal.dt * 1e3;
        let out = Courses {
            times_ms: (0..scn.n_steps()).map(|k| k as f64 * dt_ms).collect(),
            deep_true: normalized(&scn.waves.deep),
            sup_true: normalized(&scn.waves.superficial),
            deep_est: normalized(&deep),
            sup_est: normalized(&sup),
            t_deep: scn.t_deep,
            t_sup: scn.t_sup,
            theta0,
            tau_sq,
            metrics: Metrics {
                loc_err_deep_mm: m.loc_err_deep_mm,
                loc_err_sup_mm: m.loc_err_sup_mm,
                loc_err_deep_unstd_mm: m.loc_err_deep_unstd_mm,
                loc_err_sup_unstd_mm: m.loc_err_sup_unstd_mm,
                echo_ratio: m.echo_ratio,
                corr_deep: m.corr_deep,
                corr_sup: m.corr_sup,
            },
        };
        serde_json::to_string(&out).map_err(js_err)
    }

    /// Standardized amplitude over the y = 0 plane at one time step.
    #[allow(clippy::too_many_arguments)]
    pub fn slice(
        &self,
        ep: f64,
        pm: f64,
        noise: f64,
        alpha: f64,
        smoothing: bool,
        rep: usize,
        step: usize,
    ) -> Result<String, JsError> {
        let scn = &self.scenario;
        if step >= scn.n_steps() {
            return Err(JsError::new(&format!("step {step} outside 0..{}", scn.n_steps())));
        }
        let (scored, _, _) = self.score(ep, pm, noise, alpha, smoothing, rep)?;
        let map = &scored.standardized;
        let col = map.amplitudes.column(step);
        let peak = col.max();
        let half = 0.5 * scn.config.geometry.node_spacing;
        let points = map
            .positions
            .iter()
            .zip(col.iter())
            .filter(|(p, _)| p.y.abs() < half)
            .map(|(p, a)| [p.x * 1e3, p.z * 1e3, if peak > 0.0 { a / peak } else { 0.0 }])
            .collect();
        let xz = |p: skf_core::geometry::Vec3| [p.x * 1e3, p.z * 1e3];
        let out = SliceMap {
            step,
            spacing_mm: scn.config.geometry.node_spacing * 1e3,
            radius_mm: scn.config.geometry.brain_radius * 1e3,
            points,
            peak: xz(map.positions[map.argmax_node(step)]),
            deep: xz(scn.deep_position()),
            sup: xz(scn.superficial_position()),
        };
        serde_json::to_string(&out).map_err(js_err)
    }

    /// Prior variances for every EP/PM pair of the default grid at one noise level.
    pub fn priors(&self, noise: f64) -> Result<String, JsError> {
        let scn = &self.scenario;
        let meas = scn.measure(noise, 0).map_err(js_err)?;
        let grid = &scn.config.sweep;
        let mut rows = Vec::new();
        for &ep in &grid.ep_snr_db {
            for &pm in &grid.pm_snr_db {
                let p = scn.prior(ep, pm, &meas).map_err(js_err)?;
                rows.push(PriorRow { ep_snr_db: ep, pm_snr_db: pm, theta0: p.theta0, tau_sq: p.tau_i_sq });
            }
        }
        let out = PriorTable { noise_db: noise, sigma: meas.relative_noise_std(), rows };
        serde_json::to_string(&out).map_err(js_err)
    }
}

impl Demo {
    fn score(
        &self,
        ep: f64,
        pm: f64,
        noise: f64,
        alpha: f64,
        smoothing: bool,
        rep: usize,
    ) -> Result<(ScoredRun, f64, f64), JsError> {
        let scn = &self.scenario;
        let seed = measurement_seed(scn.config.sweep.base_seed, noise, rep);
        let run = scn.reconstruct(ep, pm, noise, seed, smoothing).map_err(js_err)?;
        let scored = run
            .score(alpha, smoothing, scn.config.sweep.smoothed_weighting)
            .map_err(js_err)?;
        Ok((scored, run.prior.theta0, run.prior.tau_i_sq))
    }
}
