//! Small dense helpers shared by the recursions.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative jitter added to an SPD matrix before the single retry.
pub const JITTER_REL: f64 = 1e-12;

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_mut(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factor of an SPD matrix, retrying once with
/// `JITTER_REL * trace / n` on the diagonal.
pub fn spd_factor(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows().max(1);
    let jitter = JITTER_REL * m.trace() / n as f64;
    if jitter > 0.0 && jitter.is_finite() {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(c);
        }
    }
    Err(Error::numerical(format!("{what} is not positive definite")))
}

/// Symmetric eigendecomposition with eigenvalues clamped from below at
/// `eps_rel * λ_max`. Returns `(eigenvalues, eigenvectors)`.
pub fn clamped_eigen(m: &DMatrix<f64>, eps_rel: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let lambda_max = eig.eigenvalues.max();
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::numerical(format!(
            "largest eigenvalue {lambda_max} is not positive"
        )));
    }
    let floor = eps_rel * lambda_max;
    let values = eig.eigenvalues.iter().map(|&l| l.max(floor)).collect();
    Ok((values, eig.eigenvectors))
}

/// `V f(Λ) Vᵀ` for a spectral function `f`.
pub fn spectral_apply(values: &[f64], vectors: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, &l) in values.iter().enumerate() {
        let s = f(l);
        scaled.column_mut(j).scale_mut(s);
    }
    let mut out = scaled * vectors.transpose();
    symmetrize_mut(&mut out);
    out
}

/// Largest absolute entry of `a - b` relative to the largest entry of `b`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.amax().max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_semidefinite() {
        // rank-one, PSD but singular
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        assert!(Cholesky::new(m.clone()).is_none());
        // the jittered retry either succeeds or reports failure, never panics
        let _ = spd_factor(&m, "test");
        let neg = DMatrix::from_diagonal_element(2, 2, -1.0);
        assert!(spd_factor(&neg, "neg").is_err());
    }

    #[test]
    fn spectral_apply_identity() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let (vals, vecs) = clamped_eigen(&m, 1e-12).unwrap();
        let back = spectral_apply(&vals, &vecs, |l| l);
        assert!(rel_diff(&back, &m) < 1e-14);
    }
}
