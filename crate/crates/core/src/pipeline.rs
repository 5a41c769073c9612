//! Simulation and reconstruction for one experimental configuration.
//!
//! A [`Scenario`] holds everything that does not depend on the sweep cell:
//! geometry, lead field, source placement and the clean measurements.
//! [`Scenario::reconstruct`] adds noise, builds the prior, runs the filter
//! (and optionally the smoother) and [`Reconstruction::score`] turns the
//! result into metrics for any exponent.
//!
//! The filter state is expressed in nA·m, so the lead field handed to the
//! filter is the SI lead field times 1e-9 and the observations stay in volts.

use nalgebra::{DMatrix, DVector};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geometry::{
    assemble_lead_field, build_electrode_array, build_source_space, ElectrodeArray, LeadField,
    SourceSpace, Vec3,
};
use crate::metrics::{
    amplitude_map, echo_ratio, localization_error, waveform_correlation, MetricReport,
    ReconstructionSeries,
};
use crate::priors::PriorSpec;
use crate::signal::{
    add_noise, make_sep_waveforms, synthesize_measurements, MeasurementSet, SourcePlacement,
    SourceWaveforms, NANO_AMPERE_METER,
};
use crate::smoother::SmoothedWeighting;
use crate::subspace::{run_subspace_filter, LeadBasis, SubspaceSmoothed, SubspaceTrajectory};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ExperimentConfig,
    pub space: SourceSpace,
    pub electrodes: ElectrodeArray,
    /// SI lead field (V per A·m).
    pub lead: LeadField,
    /// Basis of the lead field in V per nA·m.
    pub basis: LeadBasis,
    pub placement: SourcePlacement,
    /// Waveforms with inactive sources zeroed.
    pub waves: SourceWaveforms,
    pub clean: DMatrix<f64>,
    pub deep_region: Vec<usize>,
    pub t_deep: usize,
    pub t_sup: usize,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl Scenario {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let g = &config.geometry;
        let s = &config.signal;
        let space = build_source_space(g.node_spacing, g.brain_radius)?;
        let electrodes = build_electrode_array(g.electrodes, g.scalp_radius)?;
        let lead = assemble_lead_field(&space, &electrodes, g.conductivity)?;
        let basis = LeadBasis::new(&(lead.matrix() * NANO_AMPERE_METER))?;
        let placement = SourcePlacement::nearest(
            &space,
            &vec3(s.deep_target),
            &vec3(s.deep_moment),
            &vec3(s.superficial_target),
            &vec3(s.superficial_moment),
        )?;
        let (peak_deep, peak_sup) = s.timing.peaks();
        let waves = make_sep_waveforms(s.dt, s.total_duration, peak_deep, peak_sup, s.peak_width, s.amplitude)?
            .only(s.active);
        let clean = synthesize_measurements(&lead, &placement, &waves)?;
        let deep_pos = space.nodes()[placement.deep_node];
        let deep_region = space.nodes_within(&deep_pos, config.metrics.deep_region_radius);
        let t_deep = (peak_deep / s.dt).round() as usize;
        let t_sup = (peak_sup / s.dt).round() as usize;
        Ok(Self {
            config: config.clone(),
            space,
            electrodes,
            lead,
            basis,
            placement,
            waves,
            clean,
            deep_region,
            t_deep,
            t_sup,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.waves.n_steps()
    }

    pub fn deep_position(&self) -> Vec3 {
        self.space.nodes()[self.placement.deep_node]
    }

    pub fn superficial_position(&self) -> Vec3 {
        self.space.nodes()[self.placement.superficial_node]
    }

    /// Prior for a measurement set. The noise level enters relative to the
    /// clean-signal peak, so the prior scales with the noise exactly like
    /// the measurement covariance does.
    pub fn prior(&self, ep_snr_db: f64, pm_snr_db: f64, meas: &MeasurementSet) -> Result<PriorSpec> {
        PriorSpec::new(
            pm_snr_db,
            ep_snr_db,
            meas.relative_noise_std(),
            self.config.signal.amplitude,
            self.space.len(),
            self.n_steps(),
        )
    }

    pub fn measure(&self, noise_db: f64, seed: u64) -> Result<MeasurementSet> {
        add_noise(&self.clean, noise_db, seed)
    }

    /// Filter one noisy data set, running the smoother when `smooth` is set.
    pub fn reconstruct(
        &self,
        ep_snr_db: f64,
        pm_snr_db: f64,
        noise_db: f64,
        seed: u64,
        smooth: bool,
    ) -> Result<Reconstruction<'_>> {
        let measurements = self.measure(noise_db, seed)?;
        let prior = self.prior(ep_snr_db, pm_snr_db, &measurements)?;
        let filtered =
            run_subspace_filter(&self.basis, &prior, measurements.noise_std, &measurements.noisy)?;
        let smoothed = if smooth { Some(filtered.smooth()?) } else { None };
        Ok(Reconstruction { scenario: self, measurements, prior, filtered, smoothed })
    }
}

/// Output of one forward (and possibly backward) pass.
#[derive(Debug, Clone)]
pub struct Reconstruction<'a> {
    pub scenario: &'a Scenario,
    pub measurements: MeasurementSet,
    pub prior: PriorSpec,
    pub filtered: SubspaceTrajectory,
    pub smoothed: Option<SubspaceSmoothed>,
}

/// Metrics plus the maps they were computed from.
#[derive(Debug, Clone)]
pub struct ScoredRun {
    pub report: MetricReport,
    pub standardized: ReconstructionSeries,
    pub unstandardized: ReconstructionSeries,
}

impl ScoredRun {
    /// Standardized amplitude courses at the two true source nodes.
    pub fn source_courses(&self, scenario: &Scenario) -> (Vec<f64>, Vec<f64>) {
        (
            self.standardized.course(scenario.placement.deep_node),
            self.standardized.course(scenario.placement.superficial_node),
        )
    }
}

impl Reconstruction<'_> {
    /// Standardized estimates at exponent `alpha`, smoothed when requested.
    pub fn standardized(
        &self,
        alpha: f64,
        smoothed: bool,
        weighting: SmoothedWeighting,
    ) -> Result<Vec<DVector<f64>>> {
        let basis = &self.scenario.basis;
        if smoothed {
            self.smoothed_pass()?.standardized(basis, &self.filtered, alpha, weighting)
        } else {
            self.filtered.standardized(basis, alpha)
        }
    }

    pub fn means(&self, smoothed: bool) -> Result<Vec<DVector<f64>>> {
        let basis = &self.scenario.basis;
        if smoothed {
            Ok(self.smoothed_pass()?.means(basis))
        } else {
            Ok(self.filtered.filtered_means(basis))
        }
    }

    fn smoothed_pass(&self) -> Result<&SubspaceSmoothed> {
        self.smoothed
            .as_ref()
            .ok_or_else(|| Error::invalid("smoothed estimates requested but the smoother did not run"))
    }

    pub fn score(&self, alpha: f64, smoothed: bool, weighting: SmoothedWeighting) -> Result<ScoredRun> {
        let scn = self.scenario;
        let dt = scn.config.signal.dt;
        let standardized = amplitude_map(&self.standardized(alpha, smoothed, weighting)?, &scn.space, dt)?;
        let unstandardized = amplitude_map(&self.means(smoothed)?, &scn.space, dt)?;
        let (deep_pos, sup_pos) = (scn.deep_position(), scn.superficial_position());
        let corr = |node: usize, truth: &[f64]| -> Result<Option<f64>> {
            if truth.iter().all(|v| *v == truth[0]) {
                // inactive source: no waveform to compare against
                return Ok(None);
            }
            waveform_correlation(&standardized, node, truth)
        };
        let report = MetricReport {
            loc_err_deep_mm: localization_error(&standardized, scn.t_deep, &deep_pos)?,
            loc_err_sup_mm: localization_error(&standardized, scn.t_sup, &sup_pos)?,
            echo_ratio: echo_ratio(&standardized, &scn.deep_region, scn.t_deep, scn.t_sup)?,
            corr_deep: corr(scn.placement.deep_node, &scn.waves.deep)?,
            corr_sup: corr(scn.placement.superficial_node, &scn.waves.superficial)?,
            loc_err_deep_unstd_mm: localization_error(&unstandardized, scn.t_deep, &deep_pos)?,
            loc_err_sup_unstd_mm: localization_error(&unstandardized, scn.t_sup, &sup_pos)?,
        };
        Ok(ScoredRun { report, standardized, unstandardized })
    }
}
