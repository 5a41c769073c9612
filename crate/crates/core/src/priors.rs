//! Prior and evolution variances from the PM-SNR / EP-SNR parameters.
//!
//! Decibels are amplitude decibels throughout: `dB(x) = 20 log10(x)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Amplitude ratio for a decibel value.
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Prior-over-measurement and evolution-prior parameters with the derived
/// per-component variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub pm_snr_db: f64,
    pub ep_snr_db: f64,
    /// Per-component prior variance of the initial state.
    pub theta0: f64,
    /// Per-step process-noise variance.
    pub tau_i_sq: f64,
    /// Number of source nodes `N`.
    pub n_sources: usize,
    /// Number of time steps `K`.
    pub n_steps: usize,
    /// Noise standard deviation entering the prior formula.
    pub sigma: f64,
    /// Source amplitude `A`.
    pub amplitude: f64,
    /// Random walk switched off (`Q = 0`).
    pub static_evolution: bool,
}

impl PriorSpec {
    pub fn new(
        pm_snr_db: f64,
        ep_snr_db: f64,
        sigma: f64,
        amplitude: f64,
        n_sources: usize,
        n_steps: usize,
    ) -> Result<Self> {
        let theta0 = prior_variance_from_pm_snr(pm_snr_db, sigma, amplitude, n_sources)?;
        let tau_i_sq = evolution_variance_from_ep_snr(ep_snr_db, theta0, n_steps)?;
        Ok(Self {
            pm_snr_db,
            ep_snr_db,
            theta0,
            tau_i_sq,
            n_sources,
            n_steps,
            sigma,
            amplitude,
            static_evolution: false,
        })
    }

    /// Static-source mode: the process noise is dropped entirely.
    pub fn with_static_evolution(mut self) -> Self {
        self.static_evolution = true;
        self.tau_i_sq = 0.0;
        self
    }

    /// `κ² θ₀`, the variance accumulated by the random walk over all steps.
    pub fn net_evolution_variance(&self) -> f64 {
        db_to_amplitude(self.ep_snr_db).powi(2) * self.theta0
    }
}

/// `θ₀ = θ₀_tot σ² A² / N` with `θ₀_tot = (10^(PM/20))²`.
pub fn prior_variance_from_pm_snr(
    pm_snr_db: f64,
    sigma: f64,
    amplitude: f64,
    n_sources: usize,
) -> Result<f64> {
    if !(sigma > 0.0) || !(amplitude > 0.0) || n_sources == 0 || !pm_snr_db.is_finite() {
        return Err(Error::invalid(format!(
            "prior variance needs positive sigma, amplitude and source count \
             (sigma {sigma}, amplitude {amplitude}, N {n_sources}, PM {pm_snr_db} dB)"
        )));
    }
    let theta_tot = db_to_amplitude(pm_snr_db).powi(2);
    Ok(theta_tot * sigma * sigma * amplitude * amplitude / n_sources as f64)
}

/// `τ_i² = κ² θ₀ / K` with `κ = 10^(EP/20)`.
pub fn evolution_variance_from_ep_snr(ep_snr_db: f64, theta0: f64, n_steps: usize) -> Result<f64> {
    if n_steps < 1 {
        return Err(Error::invalid("evolution variance needs at least one time step"));
    }
    if !(theta0 > 0.0) || !ep_snr_db.is_finite() {
        return Err(Error::invalid(format!(
            "evolution variance needs positive theta0 and finite EP-SNR (theta0 {theta0}, EP {ep_snr_db} dB)"
        )));
    }
    let kappa = db_to_amplitude(ep_snr_db);
    Ok(kappa * kappa * theta0 / n_steps as f64)
}

/// Random-walk model matrices `(P0, Q, A)` for a state of dimension `3N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrices {
    pub initial_cov: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub transition: DMatrix<f64>,
}

pub fn build_model_matrices(prior: &PriorSpec, state_dim: usize) -> Result<ModelMatrices> {
    if state_dim != 3 * prior.n_sources {
        return Err(Error::invalid(format!(
            "state dimension {state_dim} is not 3 x {} sources",
            prior.n_sources
        )));
    }
    Ok(ModelMatrices {
        initial_cov: DMatrix::from_diagonal_element(state_dim, state_dim, prior.theta0),
        process_noise: DMatrix::from_diagonal_element(state_dim, state_dim, prior.tau_i_sq),
        transition: DMatrix::identity(state_dim, state_dim),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn theta0_hand_values() {
        assert!(rel(prior_variance_from_pm_snr(0.0, 0.1, 2.0, 100).unwrap(), 4e-4) < 1e-12);
        assert!(rel(prior_variance_from_pm_snr(20.0, 0.1, 2.0, 100).unwrap(), 0.04) < 1e-12);
    }

    #[test]
    fn reference_level_total_std_is_one() {
        // at 0 dB the total prior standard deviation factor is exactly 1
        assert_eq!(db_to_amplitude(0.0), 1.0);
        let theta0 = prior_variance_from_pm_snr(0.0, 0.3, 7.0, 50).unwrap();
        assert!(rel(theta0 * 50.0 / (0.3f64 * 0.3 * 49.0), 1.0) < 1e-12);
    }

    #[test]
    fn theta0_rejects_bad_inputs() {
        assert!(prior_variance_from_pm_snr(0.0, 0.0, 2.0, 100).is_err());
        assert!(prior_variance_from_pm_snr(0.0, 0.1, -2.0, 100).is_err());
        assert!(prior_variance_from_pm_snr(0.0, 0.1, 2.0, 0).is_err());
    }

    #[test]
    fn tau_hand_values() {
        assert!(rel(evolution_variance_from_ep_snr(0.0, 4e-4, 40).unwrap(), 1e-5) < 1e-12);
        assert!(rel(evolution_variance_from_ep_snr(20.0, 4e-4, 40).unwrap(), 1e-3) < 1e-12);
        assert!(evolution_variance_from_ep_snr(0.0, 4e-4, 0).is_err());
    }

    #[test]
    fn doubling_steps_halves_tau() {
        let a = evolution_variance_from_ep_snr(20.0, 4e-4, 40).unwrap();
        let b = evolution_variance_from_ep_snr(20.0, 4e-4, 80).unwrap();
        assert!(rel(b, a / 2.0) < 1e-14);
        assert!(rel(40.0 * a, 80.0 * b) < 1e-14);
    }

    #[test]
    fn model_matrices() {
        let prior = PriorSpec::new(0.0, 0.0, 0.1, 2.0, 100, 40).unwrap();
        let prior = PriorSpec { theta0: 4e-4, n_sources: 2, ..prior };
        let m = build_model_matrices(&prior, 6).unwrap();
        assert_eq!(m.initial_cov, DMatrix::from_diagonal_element(6, 6, 4e-4));
        let x = DVector::from_fn(6, |i, _| (i as f64).sin());
        assert_eq!(&m.transition * &x, x);
        assert!(build_model_matrices(&prior, 5).is_err());
    }

    #[test]
    fn static_mode_zeroes_q() {
        let prior = PriorSpec::new(0.0, 0.0, 0.1, 2.0, 2, 40).unwrap().with_static_evolution();
        let m = build_model_matrices(&prior, 6).unwrap();
        assert_eq!(m.process_noise, DMatrix::zeros(6, 6));
    }

    proptest! {
        #[test]
        fn additivity(pm in -20.0f64..40.0, ep in -20.0f64..40.0, k in 1usize..500, sigma in 1e-3f64..1.0) {
            let prior = PriorSpec::new(pm, ep, sigma, 10.0, 1000, k).unwrap();
            let lhs = prior.tau_i_sq * k as f64;
            prop_assert!(rel(lhs, prior.net_evolution_variance()) < 1e-12);
            prop_assert!(rel(lhs, 10f64.powf(ep / 10.0) * prior.theta0) < 1e-9);
        }

        #[test]
        fn monotone(pm in -20.0f64..40.0, ep in -20.0f64..40.0, step in 0.01f64..10.0) {
            let a = prior_variance_from_pm_snr(pm, 0.1, 10.0, 500).unwrap();
            let b = prior_variance_from_pm_snr(pm + step, 0.1, 10.0, 500).unwrap();
            prop_assert!(b > a);
            let c = evolution_variance_from_ep_snr(ep, a, 40).unwrap();
            let d = evolution_variance_from_ep_snr(ep + step, a, 40).unwrap();
            prop_assert!(d > c);
        }
    }
}
