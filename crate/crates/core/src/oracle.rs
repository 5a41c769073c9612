//! Independent reference computations for the filter and smoother.
//!
//! Nothing here calls into [`crate::filter`], [`crate::smoother`] or
//! [`crate::subspace`] when computing a reference value: posteriors come from
//! the information form with explicit inverses, smoothed trajectories from a
//! single dense solve of the joint normal equations. The suites at the bottom
//! compare the recursive implementations against these references on random
//! small instances and back the `oracle` CLI subcommand.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::filter::{
    run_filter, standardization_diagonal, standardization_weights, sym_inv_sqrt, update,
    weights_from_diagonal, GaussianBelief, StateSpaceModel, EIG_FLOOR_REL,
};
use crate::smoother::rts_backward;

fn normal_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random well-conditioned SPD matrix: `G Gᵀ / n + I / 2`.
pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let g = normal_matrix(rng, n, n);
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5
}

/// One random measurement-update problem.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub mean: DVector<f64>,
    pub p: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub y: DVector<f64>,
}

pub fn random_instance(rng: &mut impl Rng, n: usize, m: usize) -> RandomInstance {
    RandomInstance {
        mean: DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
        p: random_spd(rng, n),
        l: normal_matrix(rng, m, n),
        r: random_spd(rng, m),
        y: DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal)),
    }
}

fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("oracle matrix is invertible")
}

/// Information-form posterior: `Σ = (P⁻¹ + Lᵀ R⁻¹ L)⁻¹`,
/// `μ = m + Σ Lᵀ R⁻¹ (y − L m)`.
pub fn information_posterior(
    mean: &DVector<f64>,
    p: &DMatrix<f64>,
    l: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let r_inv = inverse(r);
    let cov = inverse(&(inverse(p) + l.transpose() * &r_inv * l));
    let post_mean = mean + &cov * l.transpose() * &r_inv * (y - l * mean);
    (post_mean, cov)
}

/// Closed-form standardized estimate for an isotropic prior `p I` and a
/// single measurement (the static sLORETA-like case).
pub fn sloreta_standardized(
    p: f64,
    l: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
) -> DVector<f64> {
    let s_inv = inverse(&(l * l.transpose() * p + r));
    let x = l.transpose() * &s_inv * y * p;
    let resolution = l.transpose() * &s_inv * l;
    DVector::from_fn(x.len(), |i, _| {
        let d = p * resolution[(i, i)];
        d.powf(-alpha) * x[i] / p.sqrt()
    })
}

/// `diag(P^½ Lᵀ S⁻¹ L P^½)` with `S = L P Lᵀ + R`.
pub fn standardization_diagonal_information(
    p: &DMatrix<f64>,
    l: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DVector<f64> {
    let eig = SymmetricEigen::new(p.clone());
    let sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    let s_inv = inverse(&(l * p * l.transpose() + r));
    (&sqrt * l.transpose() * s_inv * l * &sqrt).diagonal()
}

/// Weights straight from the definition `Diag[P⁻½ K S Kᵀ P⁻½]^(-1/2)`,
/// forming the full product.
pub fn definition_weights(
    p_inv_sqrt: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> DVector<f64> {
    let full = p_inv_sqrt * gain * s * gain.transpose() * p_inv_sqrt;
    full.diagonal().map(|d| 1.0 / d.sqrt())
}

/// Joint MAP trajectory of the linear-Gaussian model given all observations.
///
/// Builds the block-tridiagonal precision matrix of `(x_1, …, x_K)` with the
/// prior `x_1 ~ N(A m0, A P0 Aᵀ + Q)` and solves the normal equations at once.
pub fn batch_map_trajectory(model: &StateSpaceModel, observations: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = model.state_dim();
    let k = observations.ncols();
    let a = &model.transition;
    let q_inv = inverse(&model.process_noise);
    let r_inv = inverse(&model.measurement_noise);
    let l = &model.observation;
    let first_cov = a * &model.initial.cov * a.transpose() + &model.process_noise;
    let first_prec = inverse(&first_cov);
    let first_mean = a * &model.initial.mean;

    let mut h = DMatrix::zeros(n * k, n * k);
    let mut b = DVector::zeros(n * k);
    let lt_rinv = l.transpose() * &r_inv;
    let obs_prec = &lt_rinv * l;
    let at_qinv = a.transpose() * &q_inv;
    for t in 0..k {
        let mut diag = obs_prec.clone();
        if t == 0 {
            diag += &first_prec;
        } else {
            diag += &q_inv;
        }
        if t + 1 < k {
            diag += &at_qinv * a;
        }
        h.view_mut((t * n, t * n), (n, n)).copy_from(&diag);
        if t > 0 {
            let off = -(&q_inv * a);
            h.view_mut((t * n, (t - 1) * n), (n, n)).copy_from(&off);
            h.view_mut(((t - 1) * n, t * n), (n, n)).copy_from(&off.transpose());
        }
        let mut rhs = &lt_rinv * observations.column(t);
        if t == 0 {
            rhs += &first_prec * &first_mean;
        }
        b.rows_mut(t * n, n).copy_from(&rhs);
    }
    let x = h.lu().solve(&b).expect("joint precision is invertible");
    (0..k).map(|t| x.rows(t * n, n).into_owned()).collect()
}

/// Outcome of one oracle suite.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub name: &'static str,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

fn rel_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

/// Kalman update against the information-form posterior (mean and covariance).
pub fn update_suite(seed: u64, instances: usize) -> OracleReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..=20);
        let m = rng.random_range(1..=8);
        let inst = random_instance(&mut rng, n, m);
        let prior = GaussianBelief::new(inst.mean.clone(), inst.p.clone()).unwrap();
        let out = update(&prior, &inst.l, &inst.r, &inst.y).expect("update succeeds");
        let (mean, cov) = information_posterior(&inst.mean, &inst.p, &inst.l, &inst.r, &inst.y);
        max_error = max_error
            .max(rel_vec(&out.filtered.mean, &mean))
            .max(rel_mat(&out.filtered.cov, &cov));
    }
    OracleReport {
        name: "update vs information-form posterior",
        instances,
        max_error,
        tolerance: 1e-8,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Random model with a general transition matrix and observation sequence.
pub fn random_model(rng: &mut impl Rng, n: usize, m: usize, k: usize) -> (StateSpaceModel, DMatrix<f64>) {
    let a = DMatrix::identity(n, n) * 0.8 + normal_matrix(rng, n, n) * (0.2 / (n as f64).sqrt());
    let q = random_spd(rng, n) * 0.3;
    let l = normal_matrix(rng, m, n);
    let r = random_spd(rng, m);
    let m0 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let p0 = random_spd(rng, n);
    let model = StateSpaceModel::new(a, q, l, r, GaussianBelief::new(m0, p0).unwrap()).unwrap();
    let obs = normal_matrix(rng, m, k);
    (model, obs)
}

/// RTS smoothed means against the joint MAP trajectory.
pub fn smoother_suite(seed: u64, instances: usize) -> OracleReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=6);
        let k = rng.random_range(1..=6);
        let (model, obs) = random_model(&mut rng, n, m, k);
        let traj = run_filter(&model, &obs, 0.5).expect("filter succeeds");
        let smoothed = rts_backward(&traj).expect("smoother succeeds");
        let reference = batch_map_trajectory(&model, &obs);
        for (got, want) in smoothed.means.iter().zip(&reference) {
            max_error = max_error.max(rel_vec(got, want));
        }
    }
    OracleReport {
        name: "RTS smoother vs batch joint MAP",
        instances,
        max_error,
        tolerance: 1e-6,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// The three standardization identities; each gets its own report.
pub fn standardization_suites(seed: u64, instances: usize) -> [OracleReport; 3] {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut two_routes, mut exponent, mut definition) = (0f64, 0f64, 0f64);
    for _ in 0..instances {
        let n = rng.random_range(1..=20);
        let m = rng.random_range(1..=8);
        let inst = random_instance(&mut rng, n, m);
        let prior = GaussianBelief::new(inst.mean.clone(), inst.p.clone()).unwrap();
        let up = update(&prior, &inst.l, &inst.r, &inst.y).unwrap();
        let p_is = sym_inv_sqrt(&inst.p, EIG_FLOOR_REL).unwrap();
        let d = standardization_diagonal(&p_is, &up.gain, &up.innovation_cov).unwrap();
        let d_info = standardization_diagonal_information(&inst.p, &inst.l, &inst.r);
        two_routes = two_routes.max(rel_vec(&d, &d_info));

        let w_half = weights_from_diagonal(&d, 0.5).unwrap();
        for alpha in [0.75, 1.0, 1.25, 1.5, 2.0] {
            let w = weights_from_diagonal(&d, alpha).unwrap();
            for (a, b) in w.iter().zip(w_half.iter()) {
                exponent = exponent.max((a - b.powf(2.0 * alpha)).abs() / a.abs());
            }
        }

        let w_impl = standardization_weights(&p_is, &up.gain, &up.innovation_cov, 0.5).unwrap();
        let w_def = definition_weights(&p_is, &up.gain, &up.innovation_cov);
        definition = definition.max(rel_vec(&w_impl, &w_def));
    }
    let seconds = start.elapsed().as_secs_f64();
    [
        OracleReport {
            name: "standardization diagonal: gain route vs information route",
            instances,
            max_error: two_routes,
            tolerance: 1e-8,
            seconds,
        },
        OracleReport {
            name: "weights(alpha) = weights(0.5)^(2 alpha)",
            instances,
            max_error: exponent,
            tolerance: 1e-10,
            seconds,
        },
        OracleReport {
            name: "alpha = 0.5 reproduces the Diag[...]^(-1/2) definition",
            instances,
            max_error: definition,
            tolerance: 1e-10,
            seconds,
        },
    ]
}

/// Every suite, as run by the CLI `oracle` subcommand.
pub fn run_all(seed: u64) -> Vec<OracleReport> {
    let mut out = vec![update_suite(seed, 100), smoother_suite(seed.wrapping_add(1), 50)];
    out.extend(standardization_suites(seed.wrapping_add(2), 100));
    out
}
