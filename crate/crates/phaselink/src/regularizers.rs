//! Covariance regularization: shrinkage to a scaled identity, projection on
//! rank-k-plus-scaled-identity matrices, and banded tapering. Steps compose
//! in a user-chosen order.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eig::eigh;
use crate::error::{Error, Result};
use crate::types::HermitianMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerStep {
    /// `beta * Sigma + (1 - beta) * (trace / p) * I`, beta in [0, 1].
    Shrinkage(f64),
    /// Projection on rank-k plus scaled identity: keep the k leading
    /// eigenvalues, replace the rest by their mean.
    LowRank(usize),
    /// Zero every entry with |q - l| > b.
    Taper(usize),
}

/// An ordered list of regularization steps, applied left to right.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub steps: Vec<RegularizerStep>,
}

impl RegularizerSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn apply(&self, sigma: &HermitianMatrix) -> Result<HermitianMatrix> {
        let mut out = sigma.clone();
        for step in &self.steps {
            out = match *step {
                RegularizerStep::Shrinkage(beta) => shrink_identity(&out, beta)?,
                RegularizerStep::LowRank(k) => lowrank_project(&out, k)?,
                RegularizerStep::Taper(b) => taper(&out, b),
            };
        }
        Ok(out)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        for step in &self.steps {
            match *step {
                RegularizerStep::Shrinkage(beta) => {
                    if !(0.0..=1.0).contains(&beta) {
                        return Err(Error::BetaOutOfRange(beta));
                    }
                }
                RegularizerStep::LowRank(k) => {
                    if k == 0 || k > p {
                        return Err(Error::RankOutOfRange { k, p });
                    }
                }
                RegularizerStep::Taper(_) => {}
            }
        }
        Ok(())
    }
}

/// Shrinkage to a scaled identity: `beta * Sigma + (1 - beta) (tr/p) I`.
/// Preserves the trace.
pub fn shrink_identity(sigma: &HermitianMatrix, beta: f64) -> Result<HermitianMatrix> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::BetaOutOfRange(beta));
    }
    let p = sigma.dim();
    let mean_eig = sigma.trace_real() / p as f64;
    let mut out = sigma.matrix().map(|z| z * beta);
    for q in 0..p {
        out[(q, q)] += Complex64::new((1.0 - beta) * mean_eig, 0.0);
    }
    Ok(HermitianMatrix::from_hermitian_unchecked(out))
}

/// Projection on the set of rank-k plus scaled identity matrices: the k
/// leading eigenpairs are kept, the remaining p-k eigenvalues are replaced
/// by their mean. Preserves trace and eigenvectors; `k = p` returns the
/// input unchanged. Requires a positive semi-definite input.
pub fn lowrank_project(sigma: &HermitianMatrix, k: usize) -> Result<HermitianMatrix> {
    let p = sigma.dim();
    if k == 0 || k > p {
        return Err(Error::RankOutOfRange { k, p });
    }
    if k == p {
        return Ok(sigma.clone());
    }
    let lambdas = check_psd_descending(sigma)?;
    let lambda_bar: f64 =
        lambdas.values[k..].iter().copied().sum::<f64>() / (p - k) as f64;
    let rebuilt = rebuild_descending(&lambdas, |r, lam| if r < k { lam } else { lambda_bar });
    Ok(HermitianMatrix::from_hermitian_unchecked(rebuilt))
}

/// Plain rank-k truncation: keep the k leading eigenpairs, zero the rest.
/// The result is singular for k < p.
pub fn lowrank_truncate(sigma: &HermitianMatrix, k: usize) -> Result<HermitianMatrix> {
    let p = sigma.dim();
    if k == 0 || k > p {
        return Err(Error::RankOutOfRange { k, p });
    }
    let lambdas = check_psd_descending(sigma)?;
    let rebuilt = rebuild_descending(&lambdas, |r, lam| if r < k { lam } else { 0.0 });
    Ok(HermitianMatrix::from_hermitian_unchecked(rebuilt))
}

struct DescendingEig {
    /// Eigenvalues, descending.
    values: Vec<f64>,
    /// Matching eigenvectors as columns.
    vectors: DMatrix<Complex64>,
}

fn check_psd_descending(sigma: &HermitianMatrix) -> Result<DescendingEig> {
    let e = eigh(sigma.matrix());
    let tol = 1e-8 * sigma.trace_real().abs().max(f64::MIN_POSITIVE);
    if e.min() < -tol {
        return Err(Error::NotPositiveSemiDefinite {
            eigenvalue: e.min(),
            tol,
        });
    }
    let p = e.values.len();
    // eigh sorts ascending; flip. Ties keep a deterministic order either way
    // since only the reconstructed matrix is contractual.
    let values: Vec<f64> = e.values.iter().rev().copied().collect();
    let mut vectors = DMatrix::<Complex64>::zeros(p, p);
    for r in 0..p {
        vectors.set_column(r, &e.vectors.column(p - 1 - r));
    }
    Ok(DescendingEig { values, vectors })
}

fn rebuild_descending(e: &DescendingEig, f: impl Fn(usize, f64) -> f64) -> DMatrix<Complex64> {
    let p = e.values.len();
    let mut out = DMatrix::<Complex64>::zeros(p, p);
    for r in 0..p {
        let lam = f(r, e.values[r]);
        if lam != 0.0 {
            let v = e.vectors.column(r);
            out += (v * v.adjoint()).map(|z| z * lam);
        }
    }
    out
}

/// Banded tapering: zeroes every entry with `|q - l| > b`, leaving the
/// diagonal band untouched. `b >= p - 1` is the identity map.
pub fn taper(sigma: &HermitianMatrix, b: usize) -> HermitianMatrix {
    let p = sigma.dim();
    let mut out = sigma.matrix().clone();
    for q in 0..p {
        for l in 0..p {
            if q.abs_diff(l) > b {
                out[(q, l)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    HermitianMatrix::from_hermitian_unchecked(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::tests::random_hermitian;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_spd(p: usize, seed: u64) -> HermitianMatrix {
        let h = random_hermitian(p, seed);
        let spd = h.matrix() * h.matrix().adjoint()
            + DMatrix::<Complex64>::identity(p, p).map(|z| z * 0.3);
        HermitianMatrix::from_hermitian_unchecked(spd)
    }

    #[test]
    fn shrinkage_endpoints() {
        let s = random_spd(4, 2);
        let full = shrink_identity(&s, 1.0).unwrap();
        assert!((full.matrix() - s.matrix()).norm() < 1e-14 * s.matrix().norm());

        let id = shrink_identity(&s, 0.0).unwrap();
        let mean = s.trace_real() / 4.0;
        for q in 0..4 {
            for l in 0..4 {
                let expected = if q == l { mean } else { 0.0 };
                assert_abs_diff_eq!(id.entry(q, l).re, expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn shrinkage_mixes_toward_mean_eigenvalue() {
        let s = HermitianMatrix::from_real_diagonal(&[4.0, 0.0]);
        let out = shrink_identity(&s, 0.5).unwrap();
        assert_abs_diff_eq!(out.entry(0, 0).re, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.entry(1, 1).re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn shrinkage_rejects_out_of_range_beta() {
        let s = HermitianMatrix::identity(2);
        assert!(matches!(shrink_identity(&s, -0.1), Err(Error::BetaOutOfRange(_))));
        assert!(matches!(shrink_identity(&s, 1.5), Err(Error::BetaOutOfRange(_))));
    }

    #[test]
    fn shrinkage_preserves_trace() {
        for seed in 0..20 {
            let s = random_spd(5, seed);
            let out = shrink_identity(&s, 0.3).unwrap();
            let rel = (out.trace_real() - s.trace_real()).abs() / s.trace_real();
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn lowrank_diagonal_example() {
        let s = HermitianMatrix::from_real_diagonal(&[4.0, 2.0, 1.0, 1.0]);
        let out = lowrank_project(&s, 1).unwrap();
        let e = eigh(out.matrix());
        assert_abs_diff_eq!(e.values[3], 4.0, epsilon = 1e-12);
        for r in 0..3 {
            assert_abs_diff_eq!(e.values[r], 4.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn lowrank_full_rank_is_identity_map() {
        let s = random_spd(4, 5);
        let out = lowrank_project(&s, 4).unwrap();
        assert_eq!(out.matrix(), s.matrix());
    }

    #[test]
    fn lowrank_preserves_trace_and_lifts_smallest_eigenvalue() {
        for seed in 0..20 {
            let s = random_spd(5, 100 + seed);
            let out = lowrank_project(&s, 2).unwrap();
            let rel = (out.trace_real() - s.trace_real()).abs() / s.trace_real();
            assert!(rel < 1e-12);

            let e_in = eigh(s.matrix());
            let e_out = eigh(out.matrix());
            let lambda_bar: f64 = e_in.values[..3].iter().sum::<f64>() / 3.0;
            assert!((e_out.min() - lambda_bar).abs() <= 1e-10 * lambda_bar);
            // conditioning strictly improves
            let cond_in = e_in.max() / e_in.min();
            let cond_out = e_out.max() / e_out.min();
            assert!(cond_out < cond_in);
        }
    }

    #[test]
    fn lowrank_matches_full_evd_oracle_on_leading_subspace() {
        let s = random_spd(5, 7);
        let out = lowrank_project(&s, 2).unwrap();
        let e_in = eigh(s.matrix());
        // the two leading eigenpairs must be untouched: project the output
        // onto each leading eigenvector and recover the original eigenvalue
        for r in [4, 3] {
            let v = e_in.vectors.column(r);
            let lam = (v.adjoint() * out.matrix() * v)[(0, 0)].re;
            assert_abs_diff_eq!(lam, e_in.values[r], epsilon = 1e-9 * e_in.max());
        }
    }

    #[test]
    fn lowrank_rejects_indefinite_input_and_bad_rank() {
        let s = HermitianMatrix::from_real_diagonal(&[1.0, -1.0]);
        assert!(matches!(
            lowrank_project(&s, 1),
            Err(Error::NotPositiveSemiDefinite { .. })
        ));
        let s = HermitianMatrix::identity(3);
        assert!(matches!(lowrank_project(&s, 0), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(lowrank_project(&s, 4), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn lowrank_truncate_zeroes_trailing_spectrum() {
        let s = HermitianMatrix::from_real_diagonal(&[4.0, 2.0, 1.0]);
        let out = lowrank_truncate(&s, 1).unwrap();
        let e = eigh(out.matrix());
        assert_abs_diff_eq!(e.values[2], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn taper_examples() {
        let ones = HermitianMatrix::new(DMatrix::from_element(3, 3, c(1.0, 0.0))).unwrap();
        let banded = taper(&ones, 1);
        let expected = [
            [1.0, 1.0, 0.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ];
        for q in 0..3 {
            for l in 0..3 {
                assert_eq!(banded.entry(q, l).re, expected[q][l]);
            }
        }

        let wide = taper(&ones, 2);
        assert_eq!(wide.matrix(), ones.matrix());

        let diag_only = taper(&ones, 0);
        for q in 0..3 {
            for l in 0..3 {
                let expected = if q == l { 1.0 } else { 0.0 };
                assert_eq!(diag_only.entry(q, l).re, expected);
            }
        }
    }

    #[test]
    fn taper_idempotent_and_nested_bands_commute() {
        let s = random_spd(5, 3);
        let t2 = taper(&s, 2);
        assert_eq!(taper(&t2, 2).matrix(), t2.matrix());
        // wider band after narrower is a no-op
        assert_eq!(taper(&t2, 4).matrix(), t2.matrix());
        // order does not matter
        let a = taper(&taper(&s, 3), 1);
        let b = taper(&taper(&s, 1), 3);
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn apply_folds_steps_in_order() {
        let s = random_spd(4, 9);

        let empty = RegularizerSpec::none();
        assert_eq!(empty.apply(&s).unwrap().matrix(), s.matrix());

        let spec = RegularizerSpec {
            steps: vec![RegularizerStep::Shrinkage(0.1)],
        };
        let d = HermitianMatrix::from_real_diagonal(&[10.0, 0.0]);
        let out = spec.apply(&d).unwrap();
        assert_abs_diff_eq!(out.entry(0, 0).re, 5.5, epsilon = 1e-14);
        assert_abs_diff_eq!(out.entry(1, 1).re, 4.5, epsilon = 1e-14);

        let spec = RegularizerSpec {
            steps: vec![RegularizerStep::Taper(1), RegularizerStep::Shrinkage(0.5)],
        };
        let composed = spec.apply(&s).unwrap();
        let manual = shrink_identity(&taper(&s, 1), 0.5).unwrap();
        assert_eq!(composed.matrix(), manual.matrix());
    }

    #[test]
    fn apply_propagates_errors() {
        let s = HermitianMatrix::from_real_diagonal(&[1.0, -2.0]);
        let spec = RegularizerSpec {
            steps: vec![RegularizerStep::LowRank(1)],
        };
        assert!(spec.apply(&s).is_err());
    }
}
