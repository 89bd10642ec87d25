//! Leading singular pairs of short, wide matrices.
//!
//! Iterates live in `ℝ^{m×p}` with `m ≪ p`, so the top right singular vector
//! is recovered from the `m×m` Gram matrix `VVᵀ` instead of the `p×p` product
//! `VᵀV`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_SWEEPS: usize = 500;

/// Leading singular triple of `V` plus the rank-one residual `‖V‖_F² − σ₁²`.
#[derive(Clone, Debug)]
pub struct LeadingPair {
    pub sigma: f64,
    /// Unit left vector `q₁ ∈ ℝ^m`.
    pub left: DVector<f64>,
    /// Unit right vector `P₁ ∈ ℝ^p`, oriented so that `P₁[0] ≥ 0`.
    pub right: DVector<f64>,
    /// `‖(I − q₁q₁ᵀ)V‖_F²`, which equals `‖V‖_F² − σ₁²` without the cancellation.
    pub gap: f64,
    /// Number of power sweeps used, `None` when the dense fallback ran.
    pub sweeps: Option<usize>,
}

pub fn leading_singular_pair(v: &DMatrix<f64>) -> Result<LeadingPair> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidPoint("non-finite entry".into()));
    }
    let m = v.nrows();
    let gram = v * v.transpose();

    let mut q = DVector::from_iterator(m, v.row_iter().map(|row| row.sum()));
    let norm = q.norm();
    if norm > 1e-12 * v.norm() && norm > 0.0 {
        q /= norm;
    } else {
        // row sums vanish; start from the heaviest row instead
        let imax = (0..m)
            .max_by(|&a, &b| gram[(a, a)].total_cmp(&gram[(b, b)]))
            .unwrap_or(0);
        q = DVector::zeros(m);
        q[imax] = 1.0;
    }

    let mut converged = None;
    for sweep in 1..=POWER_MAX_SWEEPS {
        let y = &gram * &q;
        let lambda = q.dot(&y);
        let resid = (&y - &q * lambda).norm();
        let ynorm = y.norm();
        if ynorm == 0.0 {
            return Err(Error::InvalidPoint("zero matrix has no leading direction".into()));
        }
        q = y / ynorm;
        if resid <= POWER_TOL * lambda.abs() {
            converged = Some(sweep);
            break;
        }
    }

    if converged.is_none() {
        log::debug!("power iteration stalled, falling back to dense eigen-solve");
        q = dense_leading_eigenvector(&gram)?;
    }

    let lambda = q.dot(&(&gram * &q)).max(0.0);
    let sigma = lambda.sqrt();
    if sigma == 0.0 {
        return Err(Error::InvalidPoint("zero matrix has no leading direction".into()));
    }
    let mut right = v.transpose() * &q / sigma;
    // renormalize against the rounding in V^T q / sigma
    let rn = right.norm();
    right /= rn;
    if right[0] < 0.0 {
        right = -right;
        q = -q;
    }
    let residual = v - &q * (q.transpose() * v);
    let gap = residual.norm_squared();
    Ok(LeadingPair {
        sigma,
        left: q,
        right,
        gap,
        sweeps: converged,
    })
}

fn dense_leading_eigenvector(gram: &DMatrix<f64>) -> Result<DVector<f64>> {
    let eig = gram
        .clone()
        .try_symmetric_eigen(1e-15, 10_000)
        .ok_or(Error::SpectralNonConvergence {
            sweeps: POWER_MAX_SWEEPS,
        })?;
    let imax = eig.eigenvalues.imax();
    Ok(eig.eigenvectors.column(imax).into_owned())
}

/// Number of singular values above `rel_tol · σ₁`.
pub fn numerical_rank(v: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = v.singular_values();
    let s1 = sv.max();
    if s1 == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * s1).count()
}

/// Power-iteration estimate of the spectral norm `‖A‖₂`.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..200 {
        let y = a.transpose() * (a * &x);
        let ny = y.norm();
        if ny == 0.0 {
            // e is in the null space; retry from a basis vector sweep
            x = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.5 / (i as f64) });
            x.normalize_mut();
            let y = a.transpose() * (a * &x);
            if y.norm() == 0.0 {
                return 0.0;
            }
            continue;
        }
        let next = ny.sqrt();
        x = y / ny;
        if (next - est).abs() <= 1e-12 * next {
            est = next;
            break;
        }
        est = next;
    }
    est
}
