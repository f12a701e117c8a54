//! Covariance plug-in estimators built from a pixel patch: the sample
//! covariance matrix, Tyler's fixed-point estimator, correlation
//! standardization, and the phase-only sample correlation matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{phase_extract, HermitianMatrix, PixelPatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    #[default]
    Scm,
    Tyler,
    SampleCorrelation,
    PhaseOnly,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub tyler_tol: f64,
    pub tyler_max_iter: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Scm,
            tyler_tol: 1e-8,
            tyler_max_iter: 100,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tyler_tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tyler_tol must be positive, got {}",
                self.tyler_tol
            )));
        }
        if self.tyler_max_iter == 0 {
            return Err(Error::InvalidConfig(
                "tyler_max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Runs the configured estimator on a patch.
pub fn estimate(patch: &PixelPatch, cfg: &EstimatorConfig) -> Result<HermitianMatrix> {
    cfg.validate()?;
    match cfg.kind {
        EstimatorKind::Scm => Ok(scm(patch)),
        EstimatorKind::Tyler => tyler(patch, cfg),
        EstimatorKind::SampleCorrelation => to_correlation(&scm(patch)),
        EstimatorKind::PhaseOnly => Ok(phase_only_scm(patch)),
    }
}

/// Sample covariance matrix `S = (1/n) sum_i x_i x_i^H`.
pub fn scm(patch: &PixelPatch) -> HermitianMatrix {
    let x = patch.samples();
    let s = (x * x.adjoint()).map(|z| z / patch.n() as f64);
    HermitianMatrix::from_hermitian_unchecked(s)
}

/// Tyler's M-estimator of scatter: the fixed point of
/// `Sigma = (1/n) sum_i (p / x_i^H Sigma^{-1} x_i) x_i x_i^H`,
/// iterated from the identity and trace-normalized to `trace = p`.
///
/// Requires `n > p`. Scale-invariant in the samples: rescaling any sample by
/// a nonzero complex factor leaves the output unchanged.
pub fn tyler(patch: &PixelPatch, cfg: &EstimatorConfig) -> Result<HermitianMatrix> {
    cfg.validate()?;
    let (p, n) = (patch.p(), patch.n());
    if n <= p {
        return Err(Error::InsufficientSamples { n, p });
    }
    let weight = |t: f64| p as f64 / t;
    let sigma = fixed_point_scatter(patch, weight, cfg.tyler_tol, cfg.tyler_max_iter)?;
    // The fixed point is defined up to scale; pin it.
    let tr = sigma.trace_real();
    if tr <= 0.0 {
        return Err(Error::SingularIterate);
    }
    let scaled = sigma.matrix().map(|z| z * (p as f64 / tr));
    Ok(HermitianMatrix::from_hermitian_unchecked(scaled))
}

/// Generic M-estimator fixed-point iteration with weight function `u`.
/// Kept internal: the Gaussian weight `u = 1` reproduces the sample
/// covariance matrix, which tests exploit.
pub(crate) fn fixed_point_scatter(
    patch: &PixelPatch,
    u: impl Fn(f64) -> f64,
    tol: f64,
    max_iter: usize,
) -> Result<HermitianMatrix> {
    let (p, n) = (patch.p(), patch.n());
    let x = patch.samples();
    let mut sigma = DMatrix::<Complex64>::identity(p, p);
    let mut residual = f64::INFINITY;
    for iter in 0..max_iter {
        let next = weighted_outer_sum(x, &sigma, &u)?;
        residual = (&next - &sigma).norm() / sigma.norm();
        sigma = next;
        if residual < tol {
            let _ = iter;
            return Ok(HermitianMatrix::from_hermitian_unchecked(sigma));
        }
    }
    Err(Error::FixedPointNonConvergence {
        iterations: max_iter,
        residual,
        last: Box::new(HermitianMatrix::from_hermitian_unchecked(sigma)),
    })
}

fn weighted_outer_sum(
    x: &DMatrix<Complex64>,
    sigma: &DMatrix<Complex64>,
    u: &impl Fn(f64) -> f64,
) -> Result<DMatrix<Complex64>> {
    let (p, n) = (x.nrows(), x.ncols());
    let chol = sigma.clone().cholesky().ok_or(Error::SingularIterate)?;
    let mut acc = DMatrix::<Complex64>::zeros(p, p);
    for i in 0..n {
        let xi = x.column(i);
        let solved = chol.solve(&xi.clone_owned());
        let q = (xi.adjoint() * &solved)[(0, 0)].re;
        if !q.is_finite() || q <= 0.0 {
            return Err(Error::SingularIterate);
        }
        let w = u(q) / n as f64;
        // acc += w * xi xi^H
        for a in 0..p {
            for b in 0..p {
                acc[(a, b)] += xi[a] * xi[b].conj() * w;
            }
        }
    }
    Ok(acc)
}

/// Correlation standardization `D^{-1/2} Sigma D^{-1/2}` with
/// `D = diag(Sigma)`. The diagonal of the result is pinned to exactly 1.
pub fn to_correlation(sigma: &HermitianMatrix) -> Result<HermitianMatrix> {
    let p = sigma.dim();
    let mut inv_sqrt_diag = Vec::with_capacity(p);
    for q in 0..p {
        let d = sigma.entry(q, q).re;
        if d <= 0.0 {
            return Err(Error::NonPositiveDiagonal { index: q, value: d });
        }
        inv_sqrt_diag.push(1.0 / d.sqrt());
    }
    let mut c = DMatrix::<Complex64>::zeros(p, p);
    for q in 0..p {
        for l in 0..p {
            c[(q, l)] = sigma.entry(q, l) * (inv_sqrt_diag[q] * inv_sqrt_diag[l]);
        }
        c[(q, q)] = Complex64::new(1.0, 0.0);
    }
    Ok(HermitianMatrix::from_hermitian_unchecked(c))
}

/// Phase-only sample correlation `T = (1/n) sum_i y_i y_i^H` with
/// `y_i = phi(x_i)`. Unit diagonal by construction (pinned exactly),
/// off-diagonal moduli at most 1.
pub fn phase_only_scm(patch: &PixelPatch) -> HermitianMatrix {
    let y = phase_extract(patch.samples());
    let mut t = (&y * y.adjoint()).map(|z| z / patch.n() as f64);
    for q in 0..patch.p() {
        t[(q, q)] = Complex64::new(1.0, 0.0);
    }
    HermitianMatrix::from_hermitian_unchecked(t)
}
