//! Domain types shared by every stage of the chain: phase-only vectors on the
//! torus, Hermitian covariance matrices, pixel patches, and the entrywise
//! modulus / complex-phase operators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Absolute tolerance on `|entry| - 1` for vectors on the torus.
pub const UNIT_MODULUS_TOL: f64 = 1e-12;

/// Relative tolerance on conjugate symmetry for [`HermitianMatrix`].
pub const HERMITIAN_REL_TOL: f64 = 1e-10;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Complex phase of a scalar: `r e^{i theta} -> e^{i theta}`, with the
/// convention that 0 maps to 1 so outputs stay on the unit circle.
pub fn phase_entry(z: Complex64) -> Complex64 {
    if z.re == 0.0 && z.im == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        let m = z.norm();
        Complex64::new(z.re / m, z.im / m)
    }
}

/// Entrywise complex phase of a matrix.
pub fn phase_extract(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    m.map(phase_entry)
}

/// Entrywise complex phase of a vector.
pub fn phase_extract_vector(v: &DVector<Complex64>) -> DVector<Complex64> {
    v.map(phase_entry)
}

/// Entrywise modulus of a matrix.
pub fn modulus(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    m.map(|z| z.norm())
}

/// A length-p complex vector with unit-modulus entries; the optimization
/// variable of phase linking and the carrier of per-date phase estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusVector {
    entries: DVector<Complex64>,
}

impl TorusVector {
    /// Validates that every entry has modulus 1 within [`UNIT_MODULUS_TOL`]
    /// and that p >= 2.
    pub fn new(entries: DVector<Complex64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::VectorTooShort(entries.len()));
        }
        for (i, z) in entries.iter().enumerate() {
            let m = z.norm();
            if (m - 1.0).abs() > UNIT_MODULUS_TOL {
                return Err(Error::NotUnitModulus {
                    index: i,
                    modulus: m,
                    tol: UNIT_MODULUS_TOL,
                });
            }
        }
        Ok(Self { entries })
    }

    /// Builds `e^{i theta}` entrywise from a phase vector.
    pub fn from_phases(phases: &[f64]) -> Result<Self> {
        if phases.len() < 2 {
            return Err(Error::VectorTooShort(phases.len()));
        }
        let entries = DVector::from_iterator(
            phases.len(),
            phases.iter().map(|&t| Complex64::from_polar(1.0, t)),
        );
        Ok(Self { entries })
    }

    /// The all-ones vector (zero phases).
    pub fn ones(p: usize) -> Self {
        assert!(p >= 2, "torus vectors need p >= 2");
        Self {
            entries: DVector::from_element(p, Complex64::new(1.0, 0.0)),
        }
    }

    /// Wraps a vector whose entries are unit-modulus by construction
    /// (e.g. the output of [`phase_extract_vector`]).
    pub(crate) fn from_unit_unchecked(entries: DVector<Complex64>) -> Self {
        debug_assert!(entries.len() >= 2);
        debug_assert!(entries.iter().all(|z| (z.norm() - 1.0).abs() <= 1e-9));
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &DVector<Complex64> {
        &self.entries
    }

    pub fn into_inner(self) -> DVector<Complex64> {
        self.entries
    }

    /// Per-entry arguments in `(-pi, pi]`.
    pub fn phases(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.arg()).collect()
    }

    /// Rotates the vector so the first entry is exactly 1, removing the
    /// global phase ambiguity. Idempotent.
    pub fn reference_first(&self) -> Self {
        let r = self.entries[0].conj();
        let mut out = self.entries.map(|z| z * r);
        out[0] = Complex64::new(1.0, 0.0);
        Self { entries: out }
    }

    /// Largest absolute wrapped angle difference to another torus vector.
    pub fn max_angle_error(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| wrap_angle(a.arg() - b.arg()).abs())
            .fold(0.0, f64::max)
    }
}

/// A p x p complex matrix with exact conjugate symmetry and real diagonal.
///
/// The constructor validates symmetry within [`HERMITIAN_REL_TOL`] relative
/// to the largest entry, then canonicalizes to `(m + m^H)/2` with a real
/// diagonal so downstream algebra can rely on exact symmetry.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    m: DMatrix<Complex64>,
}

impl HermitianMatrix {
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let scale = m
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        for q in 0..m.nrows() {
            for l in q..m.ncols() {
                let dev = (m[(q, l)] - m[(l, q)].conj()).norm();
                if dev > HERMITIAN_REL_TOL * scale {
                    return Err(Error::NotHermitian { q, l, deviation: dev });
                }
            }
        }
        Ok(Self::canonicalize(m))
    }

    /// For matrices Hermitian by construction (sums of outer products,
    /// Hadamard products of Hermitian factors). Skips validation but still
    /// canonicalizes away floating-point asymmetry.
    pub(crate) fn from_hermitian_unchecked(m: DMatrix<Complex64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self::canonicalize(m)
    }

    fn canonicalize(m: DMatrix<Complex64>) -> Self {
        let p = m.nrows();
        let mut h = m;
        for q in 0..p {
            h[(q, q)] = Complex64::new(h[(q, q)].re, 0.0);
            for l in (q + 1)..p {
                let avg = (h[(q, l)] + h[(l, q)].conj()) * 0.5;
                h[(q, l)] = avg;
                h[(l, q)] = avg.conj();
            }
        }
        Self { m: h }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            m: DMatrix::identity(p, p),
        }
    }

    /// Real diagonal matrix.
    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let p = d.len();
        Self {
            m: DMatrix::from_fn(p, p, |q, l| {
                if q == l {
                    Complex64::new(d[q], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        }
    }

    /// Lifts a real symmetric matrix.
    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.m
    }

    pub fn entry(&self, q: usize, l: usize) -> Complex64 {
        self.m[(q, l)]
    }

    /// Entrywise modulus (real symmetric).
    pub fn modulus(&self) -> DMatrix<f64> {
        modulus(&self.m)
    }

    /// Entrywise complex phase.
    pub fn phase(&self) -> DMatrix<Complex64> {
        phase_extract(&self.m)
    }

    pub fn trace_real(&self) -> f64 {
        (0..self.dim()).map(|q| self.m[(q, q)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }
}

/// Worst phase-closure violation of a Hermitian matrix: the maximum over all
/// triplets (q, l, j) of the wrapped sum of entry arguments around the cycle.
/// Zero for any matrix of the form `Psi o (w w^H)` with entrywise-positive
/// real `Psi`.
pub fn phase_closure_residual(m: &HermitianMatrix) -> Result<f64> {
    let p = m.dim();
    if p < 3 {
        return Err(Error::ClosureNeedsTriplets(p));
    }
    // Precompute arguments; reject exact zeros, where the argument carries
    // no information.
    let mut args = DMatrix::<f64>::zeros(p, p);
    for q in 0..p {
        for l in 0..p {
            if q != l {
                let z = m.entry(q, l);
                if z.re == 0.0 && z.im == 0.0 {
                    return Err(Error::DegenerateEntry { q, l });
                }
                args[(q, l)] = z.arg();
            }
        }
    }
    let mut worst = 0.0f64;
    for q in 0..p {
        for l in (q + 1)..p {
            for j in (l + 1)..p {
                let r = wrap_angle(args[(q, l)] + args[(l, j)] + args[(j, q)]).abs();
                worst = worst.max(r);
            }
        }
    }
    Ok(worst)
}

/// A homogeneous patch: n single-look complex time series of length p,
/// stored as the p x n matrix whose columns are the samples.
#[derive(Clone, Debug)]
pub struct PixelPatch {
    samples: DMatrix<Complex64>,
}

impl PixelPatch {
    pub fn new(samples: Vec<DVector<Complex64>>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyPatch)?;
        let p = first.len();
        for (i, s) in samples.iter().enumerate() {
            if s.len() != p {
                return Err(Error::RaggedPatch {
                    expected: p,
                    index: i,
                    got: s.len(),
                });
            }
        }
        let n = samples.len();
        let m = DMatrix::from_fn(p, n, |q, i| samples[i][q]);
        Ok(Self { samples: m })
    }

    /// From a p x n matrix whose columns are the samples.
    pub fn from_matrix(samples: DMatrix<Complex64>) -> Result<Self> {
        if samples.ncols() == 0 || samples.nrows() == 0 {
            return Err(Error::EmptyPatch);
        }
        Ok(Self { samples })
    }

    /// Series length p.
    pub fn p(&self) -> usize {
        self.samples.nrows()
    }

    /// Sample count n.
    pub fn n(&self) -> usize {
        self.samples.ncols()
    }

    /// p x n sample matrix (columns are samples).
    pub fn samples(&self) -> &DMatrix<Complex64> {
        &self.samples
    }
}
