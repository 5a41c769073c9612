//! Exact standardized filtering and smoothing in the row space of the lead field.
//!
//! With a random-walk model (`A = I`), an isotropic prior `P0 = θ₀ I`,
//! isotropic process noise `Q = τ² I`, white measurement noise and a zero
//! initial mean, every covariance produced by the filter and the RTS smoother
//! has the form
//!
//! ```text
//! P = c (I − V Vᵀ) + V B Vᵀ
//! ```
//!
//! where `L = U Σ Vᵀ` is the thin SVD of the lead field (rank `r ≤ m`), `c` is
//! a scalar and `B` is `r × r`. Every mean lies in `span(V)`. The recursions
//! therefore run on `r`-dimensional quantities, and `P⁻½`, the Kalman gain and
//! the standardization diagonal are assembled from the same decomposition.
//! The results are those of [`crate::filter`] and [`crate::smoother`] up to
//! rounding; `n × n` matrices are never formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::{weights_from_diagonal, EIG_FLOOR_REL};
use crate::linalg::{clamped_eigen, spd_factor, spectral_apply, symmetrize_mut};
use crate::priors::PriorSpec;
use crate::smoother::SmoothedWeighting;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL_REL: f64 = 1e-12;

/// Thin SVD of the lead field restricted to its numerical rank.
#[derive(Debug, Clone)]
pub struct LeadBasis {
    /// Left singular vectors, `m × r`.
    u: DMatrix<f64>,
    singular: DVector<f64>,
    /// Right singular vectors, `n × r`.
    v: DMatrix<f64>,
    /// `U Σ`, the lead field seen from subspace coordinates.
    u_sigma: DMatrix<f64>,
}

impl LeadBasis {
    pub fn new(lead: &DMatrix<f64>) -> Result<Self> {
        if lead.is_empty() {
            return Err(Error::invalid("empty lead field"));
        }
        let svd = lead.clone().svd(true, true);
        let (Some(u_full), Some(vt_full)) = (svd.u, svd.v_t) else {
            return Err(Error::numerical("SVD did not return singular vectors"));
        };
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Err(Error::numerical("lead field has no positive singular value"));
        }
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > RANK_TOL_REL * smax)
            .collect();
        let r = keep.len();
        let u = DMatrix::from_fn(lead.nrows(), r, |i, j| u_full[(i, keep[j])]);
        let v = DMatrix::from_fn(lead.ncols(), r, |i, j| vt_full[(keep[j], i)]);
        let singular = DVector::from_fn(r, |j, _| svd.singular_values[keep[j]]);
        let u_sigma = &u * DMatrix::from_diagonal(&singular);
        Ok(Self { u, singular, v, u_sigma })
    }

    pub fn rank(&self) -> usize {
        self.singular.len()
    }

    pub fn state_dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular
    }

    /// Map subspace coordinates to the full state: `V ξ`.
    pub fn lift(&self, coef: &DVector<f64>) -> DVector<f64> {
        &self.v * coef
    }

    fn complement_dim(&self) -> usize {
        self.state_dim() - self.rank()
    }

    /// `dᵢ = Vᵢ D Vᵢᵀ + c (1 − |Vᵢ|²)` for every state component `i`.
    fn diagonal(&self, core: &DMatrix<f64>, complement: f64) -> DVector<f64> {
        let vd = &self.v * core;
        DVector::from_fn(self.state_dim(), |i, _| {
            let row = self.v.row(i);
            let mut d = vd.row(i).dot(&row);
            if complement != 0.0 {
                d += complement * (1.0 - row.norm_squared()).max(0.0);
            }
            d
        })
    }
}

/// Covariance `c (I − V Vᵀ) + V B Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceCov {
    pub complement: f64,
    pub core: DMatrix<f64>,
}

impl SubspaceCov {
    fn isotropic(value: f64, r: usize) -> Self {
        Self { complement: value, core: DMatrix::from_diagonal_element(r, r, value) }
    }

    fn shifted(&self, q: f64) -> Self {
        let mut core = self.core.clone();
        for i in 0..core.nrows() {
            core[(i, i)] += q;
        }
        Self { complement: self.complement + q, core }
    }

    pub fn trace(&self, basis: &LeadBasis) -> f64 {
        self.complement * basis.complement_dim() as f64 + self.core.trace()
    }

    /// Dense `n × n` form, for cross-checks on small problems.
    pub fn to_dense(&self, basis: &LeadBasis) -> DMatrix<f64> {
        let n = basis.state_dim();
        let vvt = &basis.v * basis.v.transpose();
        (DMatrix::identity(n, n) - &vvt) * self.complement + &basis.v * &self.core * basis.v.transpose()
    }
}

/// Symmetric inverse square root of a [`SubspaceCov`], with the same
/// eigenvalue floor as the dense path.
#[derive(Debug, Clone, PartialEq)]
struct InvSqrt {
    complement: f64,
    core: DMatrix<f64>,
}

fn inv_sqrt(cov: &SubspaceCov, basis: &LeadBasis) -> Result<InvSqrt> {
    let (values, vectors) = clamped_eigen(&cov.core, 0.0)?;
    let mut lambda_max = values.iter().cloned().fold(f64::MIN, f64::max);
    if basis.complement_dim() > 0 {
        lambda_max = lambda_max.max(cov.complement);
    }
    let floor = EIG_FLOOR_REL * lambda_max;
    Ok(InvSqrt {
        complement: 1.0 / cov.complement.max(floor).sqrt(),
        core: spectral_apply(&values, &vectors, |l| 1.0 / l.max(floor).sqrt()),
    })
}

#[derive(Debug, Clone)]
pub struct SubspaceStep {
    pub predicted: SubspaceCov,
    pub filtered: SubspaceCov,
    /// Filtered mean in subspace coordinates.
    pub filtered_coef: DVector<f64>,
    pub innovation_norm: f64,
    pred_inv_sqrt: InvSqrt,
    /// Standardization diagonal before exponentiation.
    pub std_diagonal: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SubspaceTrajectory {
    pub steps: Vec<SubspaceStep>,
    pub process_var: f64,
}

/// Per-step summary for diagnostics export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub trace_filtered: f64,
    pub max_weight: f64,
    pub innovation_norm: f64,
}

/// Forward pass for the random-walk model defined by `prior` with white
/// measurement noise of standard deviation `noise_std`.
pub fn run_subspace_filter(
    basis: &LeadBasis,
    prior: &PriorSpec,
    noise_std: f64,
    observations: &DMatrix<f64>,
) -> Result<SubspaceTrajectory> {
    if observations.nrows() != basis.obs_dim() {
        return Err(Error::invalid(format!(
            "observations have {} rows, lead field has {}",
            observations.nrows(),
            basis.obs_dim()
        )));
    }
    if observations.ncols() == 0 {
        return Err(Error::invalid("no time steps to filter"));
    }
    if basis.state_dim() != 3 * prior.n_sources {
        return Err(Error::invalid("lead field width is not 3 x prior source count"));
    }
    if !(noise_std > 0.0) {
        return Err(Error::invalid(format!("noise std must be positive, got {noise_std}")));
    }
    let r = basis.rank();
    let m = basis.obs_dim();
    let q = prior.tau_i_sq;
    let noise_var = noise_std * noise_std;
    let mut cov = SubspaceCov::isotropic(prior.theta0, r);
    let mut coef = DVector::zeros(r);
    let mut steps = Vec::with_capacity(observations.ncols());

    for t in 0..observations.ncols() {
        let step = (|| {
            let predicted = cov.shifted(q);
            // S = U Σ B Σ Uᵀ + σ² I
            let usb = &basis.u_sigma * &predicted.core;
            let mut s = &usb * basis.u_sigma.transpose();
            for i in 0..m {
                s[(i, i)] += noise_var;
            }
            symmetrize_mut(&mut s);
            let chol = spd_factor(&s, "innovation covariance")?;
            // κ = B Σ Uᵀ S⁻¹  (r × m), from S κᵀ = U Σ B
            let kappa = chol.solve(&usb).transpose();
            let innovation = observations.column(t) - &basis.u_sigma * &coef;
            let filtered_coef = &coef + &kappa * &innovation;
            let reduction = &kappa * &s * kappa.transpose();
            let mut core = &predicted.core - &reduction;
            symmetrize_mut(&mut core);
            let filtered = SubspaceCov { complement: predicted.complement, core };

            let pred_inv_sqrt = inv_sqrt(&predicted, basis)?;
            let d_core = &pred_inv_sqrt.core * &reduction * &pred_inv_sqrt.core;
            let std_diagonal = basis.diagonal(&d_core, 0.0);
            Ok::<_, Error>(SubspaceStep {
                predicted,
                filtered,
                filtered_coef,
                innovation_norm: innovation.norm(),
                pred_inv_sqrt,
                std_diagonal,
            })
        })()
        .map_err(|e| e.at_step(t))?;
        cov = step.filtered.clone();
        coef = step.filtered_coef.clone();
        steps.push(step);
    }
    Ok(SubspaceTrajectory { steps, process_var: q })
}

fn standardize_coef(
    basis: &LeadBasis,
    step: &SubspaceStep,
    coef: &DVector<f64>,
    diagonal: &DVector<f64>,
    alpha: f64,
) -> Result<DVector<f64>> {
    let w = weights_from_diagonal(diagonal, alpha)?;
    Ok(basis.lift(&(&step.pred_inv_sqrt.core * coef)).component_mul(&w))
}

impl SubspaceTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn filtered_means(&self, basis: &LeadBasis) -> Vec<DVector<f64>> {
        self.steps.iter().map(|s| basis.lift(&s.filtered_coef)).collect()
    }

    /// Filtered standardized estimates `z_{t|t}` at exponent `alpha`.
    pub fn standardized(&self, basis: &LeadBasis, alpha: f64) -> Result<Vec<DVector<f64>>> {
        self.steps
            .iter()
            .enumerate()
            .map(|(t, s)| {
                standardize_coef(basis, s, &s.filtered_coef, &s.std_diagonal, alpha)
                    .map_err(|e| e.at_step(t))
            })
            .collect()
    }

    pub fn diagnostics(&self, basis: &LeadBasis, alpha: f64) -> Result<Vec<StepDiagnostics>> {
        self.steps
            .iter()
            .map(|s| {
                let w = weights_from_diagonal(&s.std_diagonal, alpha)?;
                Ok(StepDiagnostics {
                    trace_filtered: s.filtered.trace(basis),
                    max_weight: w.max(),
                    innovation_norm: s.innovation_norm,
                })
            })
            .collect()
    }

    /// RTS backward pass.
    pub fn smooth(&self) -> Result<SubspaceSmoothed> {
        let k = self.len();
        if k == 0 {
            return Err(Error::invalid("empty filter trajectory"));
        }
        let q = self.process_var;
        let mut coefs = vec![DVector::zeros(0); k];
        let mut covs = vec![self.steps[k - 1].filtered.clone(); k];
        coefs[k - 1] = self.steps[k - 1].filtered_coef.clone();
        for t in (0..k - 1).rev() {
            let filt = &self.steps[t].filtered;
            let pred = filt.shifted(q);
            let chol = spd_factor(&pred.core, "one-step predictive covariance")
                .map_err(|e| e.at_step(t))?;
            let gain = chol.solve(&filt.core).transpose();
            let gain_c = filt.complement / pred.complement;
            let coef = &self.steps[t].filtered_coef
                + &gain * (&coefs[t + 1] - &self.steps[t].filtered_coef);
            let mut core = &filt.core + &gain * (&covs[t + 1].core - &pred.core) * gain.transpose();
            symmetrize_mut(&mut core);
            let complement =
                filt.complement + gain_c * gain_c * (covs[t + 1].complement - pred.complement);
            coefs[t] = coef;
            covs[t] = SubspaceCov { complement, core };
        }
        Ok(SubspaceSmoothed { coefs, covs })
    }
}

#[derive(Debug, Clone)]
pub struct SubspaceSmoothed {
    pub coefs: Vec<DVector<f64>>,
    pub covs: Vec<SubspaceCov>,
}

impl SubspaceSmoothed {
    pub fn means(&self, basis: &LeadBasis) -> Vec<DVector<f64>> {
        self.coefs.iter().map(|c| basis.lift(c)).collect()
    }

    /// Standardized smoothed estimates `z_t^s`.
    pub fn standardized(
        &self,
        basis: &LeadBasis,
        traj: &SubspaceTrajectory,
        alpha: f64,
        weighting: SmoothedWeighting,
    ) -> Result<Vec<DVector<f64>>> {
        if traj.len() != self.coefs.len() {
            return Err(Error::invalid("smoothed and filtered lengths differ"));
        }
        traj.steps
            .iter()
            .zip(self.coefs.iter().zip(&self.covs))
            .enumerate()
            .map(|(t, (step, (coef, cov)))| {
                let diagonal = match weighting {
                    SmoothedWeighting::FilterPass => step.std_diagonal.clone(),
                    SmoothedWeighting::SmoothedCovariance => {
                        let is = &step.pred_inv_sqrt;
                        let core = &is.core * (&step.predicted.core - &cov.core) * &is.core;
                        let c = is.complement
                            * is.complement
                            * (step.predicted.complement - cov.complement);
                        basis.diagonal(&core, c)
                    }
                };
                standardize_coef(basis, step, coef, &diagonal, alpha).map_err(|e| e.at_step(t))
            })
            .collect()
    }
}
