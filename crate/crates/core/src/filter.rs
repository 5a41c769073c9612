//! Dense standardized Kalman filter.
//!
//! Each step runs the ordinary Kalman prediction and update and then, without
//! feeding anything back into the recursion, forms the standardized estimate
//!
//! ```text
//! d      = diag(P⁻½ K S Kᵀ P⁻½)          (P = P_{t|t-1})
//! W^(α)  = diag(d)^(-α)
//! z      = W^(α) P⁻½ x_{t|t}
//! ```
//!
//! `α = 0.5` is the original SKF weighting; larger exponents push harder
//! against the depth bias of the lead field.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{clamped_eigen, spd_factor, spectral_apply, symmetrize_mut};
use crate::priors::{build_model_matrices, PriorSpec};

/// Eigenvalue floor of the predictive covariance, relative to its largest eigenvalue.
pub const EIG_FLOOR_REL: f64 = 1e-12;

/// Lower clamp on the standardization diagonal before exponentiation.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::invalid(format!(
                "covariance {:?} does not match mean length {}",
                cov.shape(),
                mean.len()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Linear-Gaussian state-space model with time-invariant matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub initial: GaussianBelief,
}

impl StateSpaceModel {
    pub fn new(
        transition: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        observation: DMatrix<f64>,
        measurement_noise: DMatrix<f64>,
        initial: GaussianBelief,
    ) -> Result<Self> {
        let n = initial.dim();
        let m = observation.nrows();
        if transition.shape() != (n, n) || process_noise.shape() != (n, n) {
            return Err(Error::invalid("transition and process noise must be n x n"));
        }
        if observation.ncols() != n || measurement_noise.shape() != (m, m) {
            return Err(Error::invalid("observation must be m x n and measurement noise m x m"));
        }
        Ok(Self { transition, process_noise, observation, measurement_noise, initial })
    }

    /// Random walk with `A = I`, `P0 = θ₀ I`, `Q = τ² I`, `R = σ² I` and a
    /// zero initial mean. `lead` must already be expressed in state units.
    pub fn random_walk(lead: &DMatrix<f64>, prior: &PriorSpec, noise_std: f64) -> Result<Self> {
        let n = lead.ncols();
        let m = lead.nrows();
        let mats = build_model_matrices(prior, n)?;
        let initial = GaussianBelief::new(DVector::zeros(n), mats.initial_cov)?;
        Self::new(
            mats.transition,
            mats.process_noise,
            lead.clone(),
            DMatrix::from_diagonal_element(m, m, noise_std * noise_std),
            initial,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }
}

/// `x ← A x`, `P ← A P Aᵀ + Q` (symmetrized).
pub fn predict(prev: &GaussianBelief, a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<GaussianBelief> {
    let n = prev.dim();
    if a.shape() != (n, n) || q.shape() != (n, n) {
        return Err(Error::invalid(format!(
            "predict: state dim {n}, A {:?}, Q {:?}",
            a.shape(),
            q.shape()
        )));
    }
    let mean = a * &prev.mean;
    let mut cov = a * &prev.cov * a.transpose() + q;
    symmetrize_mut(&mut cov);
    Ok(GaussianBelief { mean, cov })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutput {
    pub filtered: GaussianBelief,
    /// Kalman gain `K` (n x m).
    pub gain: DMatrix<f64>,
    /// Innovation covariance `S` (m x m).
    pub innovation_cov: DMatrix<f64>,
    /// `y - L x_{t|t-1}`.
    pub innovation: DVector<f64>,
}

/// Measurement update. `S⁻¹` is applied through a Cholesky solve.
pub fn update(
    pred: &GaussianBelief,
    l: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<UpdateOutput> {
    let n = pred.dim();
    let m = l.nrows();
    if l.ncols() != n || r.shape() != (m, m) || y.len() != m {
        return Err(Error::invalid(format!(
            "update: state dim {n}, L {:?}, R {:?}, y {}",
            l.shape(),
            r.shape(),
            y.len()
        )));
    }
    let pl_t = &pred.cov * l.transpose();
    let mut s = l * &pl_t + r;
    symmetrize_mut(&mut s);
    let chol = spd_factor(&s, "innovation covariance")?;
    // K = P Lᵀ S⁻¹  <=>  S Kᵀ = L P
    let gain = chol.solve(&pl_t.transpose()).transpose();
    let innovation = y - l * &pred.mean;
    let mean = &pred.mean + &gain * &innovation;
    let mut cov = &pred.cov - &gain * &s * gain.transpose();
    symmetrize_mut(&mut cov);
    Ok(UpdateOutput { filtered: GaussianBelief { mean, cov }, gain, innovation_cov: s, innovation })
}

/// Symmetric inverse square root `V Λ^(-1/2) Vᵀ` with eigenvalues below
/// `eps_rel * λ_max` raised to that floor.
pub fn sym_inv_sqrt(m: &DMatrix<f64>, eps_rel: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::invalid("sym_inv_sqrt needs a square matrix"));
    }
    let scale = m.amax();
    let asym = (m - m.transpose()).amax();
    if asym > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::invalid(format!("matrix is not symmetric (asymmetry {asym:e})")));
    }
    let (values, vectors) = clamped_eigen(m, eps_rel)?;
    Ok(spectral_apply(&values, &vectors, |l| 1.0 / l.sqrt()))
}

/// `dᵢ = (B S Bᵀ)ᵢᵢ` with `B = P⁻½ K`, evaluated row by row.
pub fn standardization_diagonal(
    p_inv_sqrt: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    innovation_cov: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let n = p_inv_sqrt.nrows();
    let m = innovation_cov.nrows();
    if p_inv_sqrt.shape() != (n, n) || gain.shape() != (n, m) || innovation_cov.shape() != (m, m) {
        return Err(Error::invalid(format!(
            "standardization: P^-1/2 {:?}, K {:?}, S {:?}",
            p_inv_sqrt.shape(),
            gain.shape(),
            innovation_cov.shape()
        )));
    }
    let b = p_inv_sqrt * gain;
    let bs = &b * innovation_cov;
    Ok(DVector::from_fn(n, |i, _| b.row(i).dot(&bs.row(i))))
}

/// `dᵢ^(-α)` after clamping `dᵢ` at [`WEIGHT_FLOOR`]; overflow saturates at `f64::MAX`.
pub fn weights_from_diagonal(diag: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("standardization exponent must be positive, got {alpha}")));
    }
    if diag.iter().all(|d| *d == 0.0) {
        return Err(Error::numerical("standardization diagonal is identically zero"));
    }
    if diag.iter().any(|d| d.is_nan()) {
        return Err(Error::numerical("standardization diagonal contains NaN"));
    }
    Ok(diag.map(|d| d.max(WEIGHT_FLOOR).powf(-alpha).min(f64::MAX)))
}

pub fn standardization_weights(
    p_inv_sqrt: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    innovation_cov: &DMatrix<f64>,
    alpha: f64,
) -> Result<DVector<f64>> {
    let diag = standardization_diagonal(p_inv_sqrt, gain, innovation_cov)?;
    weights_from_diagonal(&diag, alpha)
}

/// `z = diag(w) P⁻½ x`.
pub fn standardize(
    mean: &DVector<f64>,
    p_inv_sqrt: &DMatrix<f64>,
    weights: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = mean.len();
    if p_inv_sqrt.shape() != (n, n) || weights.len() != n {
        return Err(Error::invalid("standardize: dimension mismatch"));
    }
    Ok((p_inv_sqrt * mean).component_mul(weights))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub predicted: GaussianBelief,
    pub filtered: GaussianBelief,
    pub gain: DMatrix<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub innovation_norm: f64,
    /// `P_{t|t-1}^(-1/2)`, kept for standardizing smoothed means.
    pub pred_inv_sqrt: DMatrix<f64>,
    /// Standardization diagonal before exponentiation.
    pub std_diagonal: DVector<f64>,
    pub weights: DVector<f64>,
    pub standardized: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct FilterTrajectory {
    pub steps: Vec<StepRecord>,
    pub alpha: f64,
    pub model: StateSpaceModel,
}

impl FilterTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn filtered_means(&self) -> Vec<DVector<f64>> {
        self.steps.iter().map(|s| s.filtered.mean.clone()).collect()
    }

    pub fn standardized(&self) -> Vec<DVector<f64>> {
        self.steps.iter().map(|s| s.standardized.clone()).collect()
    }

    /// Filtered standardized estimates recomputed at another exponent.
    pub fn standardized_at(&self, alpha: f64) -> Result<Vec<DVector<f64>>> {
        self.steps
            .iter()
            .map(|s| {
                let w = weights_from_diagonal(&s.std_diagonal, alpha)?;
                standardize(&s.filtered.mean, &s.pred_inv_sqrt, &w)
            })
            .collect()
    }
}

/// Run the standardized filter over the columns of `observations`.
pub fn run_filter(
    model: &StateSpaceModel,
    observations: &DMatrix<f64>,
    alpha: f64,
) -> Result<FilterTrajectory> {
    if observations.nrows() != model.obs_dim() {
        return Err(Error::invalid(format!(
            "observations have {} rows, model expects {}",
            observations.nrows(),
            model.obs_dim()
        )));
    }
    if observations.ncols() == 0 {
        return Err(Error::invalid("no time steps to filter"));
    }
    let mut belief = model.initial.clone();
    let mut steps = Vec::with_capacity(observations.ncols());
    for t in 0..observations.ncols() {
        let step = (|| {
            let predicted = predict(&belief, &model.transition, &model.process_noise)?;
            let y = observations.column(t).into_owned();
            let up = update(&predicted, &model.observation, &model.measurement_noise, &y)?;
            let pred_inv_sqrt = sym_inv_sqrt(&predicted.cov, EIG_FLOOR_REL)?;
            let std_diagonal = standardization_diagonal(&pred_inv_sqrt, &up.gain, &up.innovation_cov)?;
            let weights = weights_from_diagonal(&std_diagonal, alpha)?;
            let standardized = standardize(&up.filtered.mean, &pred_inv_sqrt, &weights)?;
            Ok::<_, Error>(StepRecord {
                predicted,
                filtered: up.filtered,
                gain: up.gain,
                innovation_cov: up.innovation_cov,
                innovation_norm: up.innovation.norm(),
                pred_inv_sqrt,
                std_diagonal,
                weights,
                standardized,
            })
        })()
        .map_err(|e| e.at_step(t))?;
        belief = step.filtered.clone();
        steps.push(step);
    }
    Ok(FilterTrajectory { steps, alpha, model: model.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_diff;
    use crate::oracle::{information_posterior, random_instance, sloreta_standardized};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn belief(m: f64, p: f64) -> GaussianBelief {
        GaussianBelief::new(DVector::from_element(1, m), scalar(p)).unwrap()
    }

    #[test]
    fn predict_identity_keeps_belief() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_instance(&mut rng, 5, 3);
        let b = GaussianBelief::new(inst.mean.clone(), inst.p.clone()).unwrap();
        let out = predict(&b, &DMatrix::identity(5, 5), &DMatrix::zeros(5, 5)).unwrap();
        assert_eq!(out.mean, b.mean);
        assert!(rel_diff(&out.cov, &b.cov) < 1e-15);
    }

    #[test]
    fn predict_scalar() {
        let out = predict(&belief(0.0, 0.2), &scalar(1.0), &scalar(0.3)).unwrap();
        assert_eq!(out.mean[0], 0.0);
        assert!((out.cov[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn predict_eigen_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_instance(&mut rng, 6, 2);
        let b = GaussianBelief::new(inst.mean.clone(), inst.p.clone()).unwrap();
        let q = 0.37;
        let out =
            predict(&b, &DMatrix::identity(6, 6), &DMatrix::from_diagonal_element(6, 6, q)).unwrap();
        let mut before: Vec<f64> = inst.p.clone().symmetric_eigenvalues().iter().copied().collect();
        let mut after: Vec<f64> = out.cov.symmetric_eigenvalues().iter().copied().collect();
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        for (a, b) in after.iter().zip(&before) {
            assert!((a - b - q).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_dimension_mismatch() {
        assert!(predict(&belief(0.0, 1.0), &DMatrix::identity(2, 2), &scalar(0.0)).is_err());
    }

    #[test]
    fn update_scalar() {
        let out = update(&belief(0.0, 1.0), &scalar(2.0), &scalar(1.0), &DVector::from_element(1, 4.0))
            .unwrap();
        assert!((out.innovation_cov[(0, 0)] - 5.0).abs() < 1e-15);
        assert!((out.gain[(0, 0)] - 0.4).abs() < 1e-15);
        assert!((out.filtered.mean[0] - 1.6).abs() < 1e-15);
        assert!((out.filtered.cov[(0, 0)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn update_zero_innovation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 7, 4);
        let b = GaussianBelief::new(inst.mean.clone(), inst.p.clone()).unwrap();
        let y = &inst.l * &inst.mean;
        let out = update(&b, &inst.l, &inst.r, &y).unwrap();
        assert!((&out.filtered.mean - &inst.mean).amax() < 1e-12 * inst.mean.amax());
    }

    #[test]
    fn update_matches_information_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 12, 5);
            let b = GaussianBelief::new(inst.mean.clone(), inst.p.clone()).unwrap();
            let out = update(&b, &inst.l, &inst.r, &inst.y).unwrap();
            let (mean, cov) = information_posterior(&inst.mean, &inst.p, &inst.l, &inst.r, &inst.y);
            assert!((&out.filtered.mean - &mean).amax() / mean.amax() < 1e-8);
            assert!(rel_diff(&out.filtered.cov, &cov) < 1e-8);
        }
    }

    #[test]
    fn update_rejects_indefinite_innovation() {
        let out = update(&belief(0.0, 1.0), &scalar(1.0), &scalar(-5.0), &DVector::from_element(1, 0.0));
        assert!(matches!(out, Err(Error::Numerical { .. })));
    }

    #[test]
    fn inv_sqrt_closed_forms() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert!(rel_diff(&sym_inv_sqrt(&i, 1e-12).unwrap(), &i) < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let out = sym_inv_sqrt(&d, 1e-12).unwrap();
        assert!((out[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((out[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!(out[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn inv_sqrt_defining_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 8, 15] {
            let inst = random_instance(&mut rng, n, 2);
            let s = sym_inv_sqrt(&inst.p, 1e-12).unwrap();
            let id = &s * &s * &inst.p;
            assert!(rel_diff(&id, &DMatrix::identity(n, n)) < 1e-8);
        }
    }

    #[test]
    fn inv_sqrt_rejects_non_positive() {
        assert!(sym_inv_sqrt(&DMatrix::from_diagonal_element(3, 3, -1.0), 1e-12).is_err());
        assert!(sym_inv_sqrt(&DMatrix::zeros(3, 3), 1e-12).is_err());
    }

    #[test]
    fn scalar_chain_weights_and_estimates() {
        // P = 1, K = 0.4, S = 5 -> d = 0.8
        let p_is = scalar(1.0);
        let d = standardization_diagonal(&p_is, &scalar(0.4), &scalar(5.0)).unwrap();
        assert!((d[0] - 0.8).abs() < 1e-15);
        let w05 = standardization_weights(&p_is, &scalar(0.4), &scalar(5.0), 0.5).unwrap();
        let w125 = standardization_weights(&p_is, &scalar(0.4), &scalar(5.0), 1.25).unwrap();
        assert!((w05[0] - 0.8f64.powf(-0.5)).abs() < 1e-15);
        assert!((w05[0] - 1.118034).abs() < 1e-6);
        assert!((w125[0] - 1.321714).abs() < 1e-6);
        let x = DVector::from_element(1, 1.6);
        let z05 = standardize(&x, &p_is, &w05).unwrap();
        let z125 = standardize(&x, &p_is, &w125).unwrap();
        assert!((z05[0] - 1.788854).abs() < 1e-6);
        assert!((z125[0] - 2.114743).abs() < 1e-6);
    }

    #[test]
    fn identity_standardization() {
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let z = standardize(&x, &DMatrix::identity(3, 3), &DVector::from_element(3, 1.0)).unwrap();
        assert_eq!(z, x);
    }

    #[test]
    fn weights_reject_bad_inputs() {
        assert!(weights_from_diagonal(&DVector::from_element(2, 1.0), 0.0).is_err());
        assert!(matches!(
            weights_from_diagonal(&DVector::zeros(3), 0.5),
            Err(Error::Numerical { .. })
        ));
        // silent component stays finite
        let w = weights_from_diagonal(&DVector::from_vec(vec![0.0, 1.0]), 1.5).unwrap();
        assert!(w.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn zero_measurements_give_zero_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inst = random_instance(&mut rng, 9, 4);
        let model = StateSpaceModel::new(
            DMatrix::identity(9, 9),
            DMatrix::from_diagonal_element(9, 9, 0.1),
            inst.l.clone(),
            inst.r.clone(),
            GaussianBelief::new(DVector::zeros(9), inst.p.clone()).unwrap(),
        )
        .unwrap();
        let traj = run_filter(&model, &DMatrix::zeros(4, 5), 1.0).unwrap();
        assert_eq!(traj.len(), 5);
        for s in &traj.steps {
            assert_eq!(s.filtered.mean.amax(), 0.0);
            assert_eq!(s.standardized.amax(), 0.0);
        }
    }

    #[test]
    fn single_step_matches_sloreta() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inst = random_instance(&mut rng, 12, 5);
        let theta0 = 0.7;
        let q = 0.2;
        let model = StateSpaceModel::new(
            DMatrix::identity(12, 12),
            DMatrix::from_diagonal_element(12, 12, q),
            inst.l.clone(),
            inst.r.clone(),
            GaussianBelief::new(DVector::zeros(12), DMatrix::from_diagonal_element(12, 12, theta0))
                .unwrap(),
        )
        .unwrap();
        let obs = DMatrix::from_column_slice(5, 1, inst.y.as_slice());
        for alpha in [0.5, 1.25] {
            let traj = run_filter(&model, &obs, alpha).unwrap();
            let z = &traj.steps[0].standardized;
            let expected = sloreta_standardized(theta0 + q, &inst.l, &inst.r, &inst.y, alpha);
            assert!((z - &expected).amax() / expected.amax() < 1e-8);
        }
    }

    #[test]
    fn exponent_consistency_and_covariance_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inst = random_instance(&mut rng, 10, 4);
        let model = StateSpaceModel::new(
            DMatrix::identity(10, 10),
            DMatrix::from_diagonal_element(10, 10, 0.05),
            inst.l.clone(),
            inst.r.clone(),
            GaussianBelief::new(DVector::zeros(10), inst.p.clone()).unwrap(),
        )
        .unwrap();
        let obs = DMatrix::from_fn(4, 6, |i, t| ((i + 2 * t) as f64).sin());
        let traj = run_filter(&model, &obs, 0.5).unwrap();
        for s in &traj.steps {
            let w1 = weights_from_diagonal(&s.std_diagonal, 1.25).unwrap();
            for (a, b) in w1.iter().zip(s.weights.iter()) {
                assert!((a - b.powf(2.5)).abs() <= 1e-10 * a.abs());
            }
            let dp = s.predicted.cov.diagonal() - s.filtered.cov.diagonal();
            let scale = s.predicted.cov.diagonal().max();
            assert!(dp.iter().all(|v| *v >= -1e-10 * scale));
        }
    }

    #[test]
    fn run_filter_rejects_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = random_instance(&mut rng, 4, 2);
        let model = StateSpaceModel::new(
            DMatrix::identity(4, 4),
            DMatrix::zeros(4, 4),
            inst.l.clone(),
            inst.r.clone(),
            GaussianBelief::new(DVector::zeros(4), inst.p.clone()).unwrap(),
        )
        .unwrap();
        assert!(run_filter(&model, &DMatrix::zeros(3, 2), 0.5).is_err());
        assert!(run_filter(&model, &DMatrix::zeros(2, 0), 0.5).is_err());
    }
}
