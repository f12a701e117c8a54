//! Hermitian eigendecomposition and the spectral helpers built on it.
//!
//! Everything that needs a spectrum (low-rank projection, definiteness
//! checks, matrix square roots, extreme eigenvectors) goes through [`eigh`]
//! so the backend lives in one place.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dimension above which extreme eigenvalues switch from a full
/// decomposition to power iteration.
pub const FULL_EVD_LIMIT: usize = 512;

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending,
/// eigenvectors as matching columns.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl HermitianEig {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    /// Rebuilds `U diag(f(lambda)) U^H`.
    pub fn rebuild_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<Complex64> {
        let p = self.values.len();
        let mut out = DMatrix::<Complex64>::zeros(p, p);
        for (k, &lam) in self.values.iter().enumerate() {
            let v = self.vectors.column(k);
            let scaled = f(lam);
            if scaled != 0.0 {
                out += (v * v.adjoint()).map(|z| z * scaled);
            }
        }
        out
    }
}

/// Full eigendecomposition of a Hermitian matrix, eigenvalues sorted
/// ascending.
pub fn eigh(m: &DMatrix<Complex64>) -> HermitianEig {
    assert_eq!(m.nrows(), m.ncols(), "eigh needs a square matrix");
    let se = m.clone().symmetric_eigen();
    let p = m.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let mut vectors = DMatrix::<Complex64>::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    HermitianEig { values, vectors }
}

/// Smallest and largest eigenvalue. Full decomposition up to
/// [`FULL_EVD_LIMIT`], power iteration above.
pub fn spectral_bounds(m: &DMatrix<Complex64>) -> (f64, f64) {
    if m.nrows() <= FULL_EVD_LIMIT {
        let e = eigh(m);
        (e.min(), e.max())
    } else {
        power_bounds(m)
    }
}

/// Power-iteration estimate of the extreme eigenvalues: first the largest
/// magnitude, then the opposite end via a shifted iteration.
fn power_bounds(m: &DMatrix<Complex64>) -> (f64, f64) {
    let p = m.nrows();
    let dominant = power_eigenvalue(m, 4 * p);
    // Shift so the opposite extreme dominates: eigenvalues of m - dominant I
    // lie in [min - dominant, max - dominant].
    let shifted = m - DMatrix::<Complex64>::identity(p, p).map(|z| z * dominant);
    let other = power_eigenvalue(&shifted, 4 * p) + dominant;
    (dominant.min(other), dominant.max(other))
}

fn power_eigenvalue(m: &DMatrix<Complex64>, iters: usize) -> f64 {
    let p = m.nrows();
    // Deterministic, dense start vector.
    let mut v = DVector::from_fn(p, |i, _| {
        Complex64::new(1.0, ((i % 7) as f64 - 3.0) * 0.1)
    });
    v /= Complex64::new(v.norm(), 0.0);
    let mut lambda = 0.0;
    for _ in 0..iters.max(32) {
        let w = m * &v;
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        lambda = (v.adjoint() * &w)[(0, 0)].re;
        v = w / Complex64::new(n, 0.0);
    }
    lambda
}

/// Hermitian square root of a positive semi-definite matrix. Eigenvalues in
/// `[-tol, 0)` are clamped to zero so singular inputs (rank-deficient
/// covariances) stay usable; anything below `-tol` is an error.
pub fn sqrt_psd(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let e = eigh(m);
    let tol = 1e-10 * e.spectral_radius().max(f64::MIN_POSITIVE);
    if e.min() < -tol {
        return Err(Error::NotPositiveSemiDefinite {
            eigenvalue: e.min(),
            tol,
        });
    }
    Ok(e.rebuild_with(|lam| lam.max(0.0).sqrt()))
}

/// Inverse and inverse square root of a positive definite matrix.
pub fn inv_and_inv_sqrt_spd(
    m: &DMatrix<Complex64>,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let e = eigh(m);
    if e.min() <= 0.0 {
        return Err(Error::NotPositiveDefinite(e.min()));
    }
    let inv = e.rebuild_with(|lam| 1.0 / lam);
    let inv_sqrt = e.rebuild_with(|lam| 1.0 / lam.sqrt());
    Ok((inv, inv_sqrt))
}

/// Inverse of a real symmetric matrix together with its reciprocal condition
/// number `min|lambda| / max|lambda|`.
pub fn inv_symmetric_with_rcond(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let lifted = m.map(|x| Complex64::new(x, 0.0));
    let e = eigh(&lifted);
    let max_abs = e.values.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let min_abs = e.values.iter().fold(f64::INFINITY, |a, &l| a.min(l.abs()));
    let rcond = if max_abs == 0.0 { 0.0 } else { min_abs / max_abs };
    let inv = e.rebuild_with(|lam| if lam == 0.0 { 0.0 } else { 1.0 / lam });
    (inv.map(|z| z.re), rcond)
}
