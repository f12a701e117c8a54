//! Fitting objectives over the torus: the KL, LS, and WLS matrix distances
//! between a regularized plug-in and its phase-constrained counterpart,
//! exposed through cached values and Euclidean gradients.
//!
//! KL and LS reduce to quadratic forms `w^H M w`; their kernels feed the
//! majorization-minimization solver directly. WLS is not a quadratic form
//! and is only reachable through the Riemannian solver.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eig::{inv_and_inv_sqrt_spd, inv_symmetric_with_rcond};
use crate::error::{Error, Result};
use crate::types::{HermitianMatrix, TorusVector};

/// Reciprocal-condition floor below which the modulus matrix counts as
/// singular for KL kernel construction.
pub const KL_RCOND_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Kl,
    #[default]
    Ls,
    Wls,
}

impl ObjectiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::Kl => "kl",
            ObjectiveKind::Ls => "ls",
            ObjectiveKind::Wls => "wls",
        }
    }
}

/// Quadratic kernel of the KL objective: `M = Psi^{-1} o Sigma` with
/// `Psi = mod(Sigma)`. Fails when `Psi` is numerically singular.
pub fn kl_kernel(sigma_tilde: &HermitianMatrix) -> Result<HermitianMatrix> {
    kl_kernel_with_psi(sigma_tilde, &sigma_tilde.modulus())
}

fn kl_kernel_with_psi(
    sigma_tilde: &HermitianMatrix,
    psi: &DMatrix<f64>,
) -> Result<HermitianMatrix> {
    let (psi_inv, rcond) = inv_symmetric_with_rcond(psi);
    if rcond < KL_RCOND_FLOOR {
        return Err(Error::SingularModulus { rcond });
    }
    let p = sigma_tilde.dim();
    let m = DMatrix::from_fn(p, p, |q, l| sigma_tilde.entry(q, l) * psi_inv[(q, l)]);
    Ok(HermitianMatrix::from_hermitian_unchecked(m))
}

/// Quadratic kernel of the LS objective: `M = -(Psi o Sigma)`, entrywise
/// `-|Sigma_ql| * Sigma_ql`.
pub fn ls_kernel(sigma_tilde: &HermitianMatrix) -> HermitianMatrix {
    ls_kernel_with_psi(sigma_tilde, &sigma_tilde.modulus())
}

fn ls_kernel_with_psi(sigma_tilde: &HermitianMatrix, psi: &DMatrix<f64>) -> HermitianMatrix {
    let p = sigma_tilde.dim();
    let m = DMatrix::from_fn(p, p, |q, l| -sigma_tilde.entry(q, l) * psi[(q, l)]);
    HermitianMatrix::from_hermitian_unchecked(m)
}

struct WlsCache {
    /// Real symmetric modulus matrix.
    psi: DMatrix<f64>,
    /// `Sigma^{-1}`.
    inv: DMatrix<Complex64>,
    /// `Sigma^{-1/2}` (Hermitian square root of the inverse).
    inv_sqrt: DMatrix<Complex64>,
}

/// A fitting objective bound to a regularized plug-in, with the quadratic
/// kernel (KL/LS) or the plug-in factorizations (WLS) cached at build time.
/// Immutable after construction; evaluation is read-only.
pub struct Objective {
    kind: ObjectiveKind,
    sigma_tilde: HermitianMatrix,
    kernel: Option<HermitianMatrix>,
    wls: Option<WlsCache>,
}

impl Objective {
    /// Standard construction: the modulus matrix is taken from
    /// `sigma_tilde` itself.
    pub fn build(kind: ObjectiveKind, sigma_tilde: HermitianMatrix) -> Result<Self> {
        let psi = sigma_tilde.modulus();
        Self::build_with_psi(kind, sigma_tilde, psi)
    }

    /// Mix-and-match hook: use a modulus matrix regularized separately from
    /// the plug-in (for likelihood-style constructions where only the
    /// modulus estimate is regularized). Not the default path.
    pub fn build_with_psi(
        kind: ObjectiveKind,
        sigma_tilde: HermitianMatrix,
        psi: DMatrix<f64>,
    ) -> Result<Self> {
        if psi.nrows() != sigma_tilde.dim() || psi.ncols() != sigma_tilde.dim() {
            return Err(Error::InvalidConfig(
                "modulus matrix dimensions do not match the plug-in".into(),
            ));
        }
        let mut kernel = None;
        let mut wls = None;
        match kind {
            ObjectiveKind::Kl => {
                kernel = Some(kl_kernel_with_psi(&sigma_tilde, &psi)?);
            }
            ObjectiveKind::Ls => {
                kernel = Some(ls_kernel_with_psi(&sigma_tilde, &psi));
            }
            ObjectiveKind::Wls => {
                let (inv, inv_sqrt) = inv_and_inv_sqrt_spd(sigma_tilde.matrix())?;
                wls = Some(WlsCache { psi, inv, inv_sqrt });
            }
        }
        Ok(Self {
            kind,
            sigma_tilde,
            kernel,
            wls,
        })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.sigma_tilde.dim()
    }

    pub fn sigma_tilde(&self) -> &HermitianMatrix {
        &self.sigma_tilde
    }

    /// Quadratic kernel for KL/LS; WLS has none.
    pub fn kernel(&self) -> Result<&HermitianMatrix> {
        self.kernel
            .as_ref()
            .ok_or(Error::NoQuadraticKernel(self.kind.name()))
    }

    /// Objective value at a point on the torus.
    pub fn value(&self, w: &TorusVector) -> f64 {
        self.value_at(w.entries())
    }

    /// Value as a function of an arbitrary complex vector (the torus
    /// restriction of the quadratic/quartic forms). Finite-difference
    /// validation of the Euclidean gradient relies on this extension.
    pub fn value_at(&self, w: &DVector<Complex64>) -> f64 {
        match self.kind {
            ObjectiveKind::Kl | ObjectiveKind::Ls => {
                let m = self.kernel.as_ref().unwrap().matrix();
                let v = (w.adjoint() * m * w)[(0, 0)];
                debug_assert!(v.im.abs() < 1e-10 * v.re.abs().max(1.0));
                v.re
            }
            ObjectiveKind::Wls => {
                let cache = self.wls.as_ref().unwrap();
                let a = hadamard_outer(&cache.psi, w);
                let b = DMatrix::<Complex64>::identity(w.len(), w.len())
                    - &cache.inv_sqrt * a * &cache.inv_sqrt;
                b.norm_squared()
            }
        }
    }

    /// Euclidean gradient under the real inner product `<a, b> = Re(a^H b)`:
    /// `2 M w` for the quadratic kernels, and
    /// `4 [Psi o (Q A Q - Q)] w` with `Q = Sigma^{-1}`, `A = Psi o (w w^H)`
    /// for WLS. Validated against central finite differences.
    pub fn euclidean_gradient(&self, w: &TorusVector) -> DVector<Complex64> {
        self.euclidean_gradient_at(w.entries())
    }

    pub fn euclidean_gradient_at(&self, w: &DVector<Complex64>) -> DVector<Complex64> {
        match self.kind {
            ObjectiveKind::Kl | ObjectiveKind::Ls => {
                let m = self.kernel.as_ref().unwrap().matrix();
                (m * w).map(|z| z * 2.0)
            }
            ObjectiveKind::Wls => {
                let cache = self.wls.as_ref().unwrap();
                let a = hadamard_outer(&cache.psi, w);
                let g = &cache.inv * a * &cache.inv - &cache.inv;
                let p = w.len();
                let scaled = DMatrix::from_fn(p, p, |q, l| g[(q, l)] * cache.psi[(q, l)]);
                (scaled * w).map(|z| z * 4.0)
            }
        }
    }
}

/// `Psi o (w w^H)` for real `Psi`.
fn hadamard_outer(psi: &DMatrix<f64>, w: &DVector<Complex64>) -> DMatrix<Complex64> {
    let p = w.len();
    DMatrix::from_fn(p, p, |q, l| w[q] * w[l].conj() * psi[(q, l)])
}
