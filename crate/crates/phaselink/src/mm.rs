//! Majorization-minimization on the torus for quadratic objectives
//! `w^H M w`, with definiteness safeguards, plus the eigenvector relaxation
//! that drops the unit-modulus constraint to a unit-norm one.
//!
//! Convex kernels iterate `w <- phi(lambda_max I - M) w`, concave kernels
//! `w <- phi(-M w)`; both reduce each step to a closed-form projection, so
//! the objective decreases monotonically with no step-size parameter.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eig::eigh;
use crate::error::{Error, Result};
use crate::types::{phase_extract_vector, HermitianMatrix, TorusVector};

/// Relative tolerance (times the spectral radius) for calling an eigenvalue
/// sign boundary.
pub const DEFINITENESS_REL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MmInit {
    /// Start from the all-ones vector (zero phases).
    #[default]
    Ones,
    /// Warm start from the phases of the kernel's first column.
    LeadingColumnPhases,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Safeguard {
    /// Shift the spectrum by the largest eigenvalue; valid on the torus for
    /// any Hermitian kernel since the shift only adds a constant there.
    #[default]
    EigShift,
    /// Split the kernel into its positive and negative parts by
    /// eigendecomposition and majorize each part separately.
    PosNegSplit,
    /// Refuse indefinite kernels.
    None,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MmConfig {
    pub max_iter: usize,
    /// Relative objective-change stopping threshold.
    pub tol: f64,
    pub init: MmInit,
    pub safeguard: Safeguard,
}

impl Default for MmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-9,
            init: MmInit::Ones,
            safeguard: Safeguard::EigShift,
        }
    }
}

impl MmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mm tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Outcome of a torus solve (MM or Riemannian).
#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Referenced phases (first entry exactly 1).
    pub w: TorusVector,
    /// Number of updates applied.
    pub iterations: usize,
    /// Objective value at the start point and after every update.
    pub objective_trace: Vec<f64>,
    /// Stopped by tolerance rather than the iteration cap.
    pub converged: bool,
    /// The zero-to-one phase convention fired at least once.
    pub hit_zero_phase: bool,
}

/// How the solver classified the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Definiteness {
    PositiveSemi,
    NegativeSemi,
    Indefinite,
}

fn classify(lambda_min: f64, lambda_max: f64) -> Definiteness {
    let radius = lambda_min.abs().max(lambda_max.abs());
    let tol = DEFINITENESS_REL_TOL * radius;
    if lambda_min >= -tol {
        Definiteness::PositiveSemi
    } else if lambda_max <= tol {
        Definiteness::NegativeSemi
    } else {
        Definiteness::Indefinite
    }
}

/// Minimizes `w^H M w` over the torus by majorization-minimization, starting
/// from the configured initialization.
pub fn mm_solve(m: &HermitianMatrix, cfg: &MmConfig) -> Result<SolveReport> {
    let w0 = match cfg.init {
        MmInit::Ones => TorusVector::ones(m.dim()),
        MmInit::LeadingColumnPhases => leading_column_start(m),
    };
    mm_solve_from(m, cfg, &w0)
}

/// Warm start: phases of the kernel's first column, sign-flipped for
/// concave kernels so the column aligns with the plug-in phases.
fn leading_column_start(m: &HermitianMatrix) -> TorusVector {
    let mut col = m.matrix().column(0).clone_owned();
    if m.entry(0, 0).re < 0.0 {
        col = -col;
    }
    TorusVector::from_unit_unchecked(phase_extract_vector(&col))
}

/// As [`mm_solve`] but from an explicit start point.
pub fn mm_solve_from(
    m: &HermitianMatrix,
    cfg: &MmConfig,
    w0: &TorusVector,
) -> Result<SolveReport> {
    cfg.validate()?;
    let p = m.dim();
    assert_eq!(w0.dim(), p, "start point dimension mismatch");

    let decomp = eigh(m.matrix());
    let (lo, hi) = (decomp.min(), decomp.max());
    // Surrogate-minimization matrix B: each step is w <- phi(B w).
    let iteration_matrix: DMatrix<Complex64> = match classify(lo, hi) {
        Definiteness::PositiveSemi => shifted_negation(m.matrix(), hi),
        Definiteness::NegativeSemi => -m.matrix(),
        Definiteness::Indefinite => match cfg.safeguard {
            Safeguard::None => return Err(Error::IndefiniteKernel),
            Safeguard::EigShift => shifted_negation(m.matrix(), hi),
            Safeguard::PosNegSplit => {
                // M = M+ + M-; the convex part gets the eigen-shift of its
                // own largest eigenvalue, the concave part plain negation.
                let plus = decomp.rebuild_with(|l| l.max(0.0));
                let minus = decomp.rebuild_with(|l| l.min(0.0));
                let plus_max = decomp.max().max(0.0);
                shifted_negation(&plus, plus_max) - minus
            }
        },
    };

    let mut w = w0.clone();
    let mut trace = Vec::with_capacity(cfg.max_iter + 1);
    trace.push(quadratic_value(m, &w));
    let mut hit_zero = false;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        let lifted = &iteration_matrix * w.entries();
        if lifted.iter().any(|z| z.re == 0.0 && z.im == 0.0) {
            hit_zero = true;
        }
        w = TorusVector::from_unit_unchecked(phase_extract_vector(&lifted));
        iterations += 1;
        let f = quadratic_value(m, &w);
        let prev = *trace.last().unwrap();
        trace.push(f);
        if (prev - f).abs() <= cfg.tol * prev.abs() {
            converged = true;
            break;
        }
    }

    Ok(SolveReport {
        w: w.reference_first(),
        iterations,
        objective_trace: trace,
        converged,
        hit_zero_phase: hit_zero,
    })
}

fn shifted_negation(m: &DMatrix<Complex64>, lambda_max: f64) -> DMatrix<Complex64> {
    let p = m.nrows();
    let mut b = -m.clone();
    for q in 0..p {
        b[(q, q)] += Complex64::new(lambda_max, 0.0);
    }
    b
}

pub(crate) fn quadratic_value(m: &HermitianMatrix, w: &TorusVector) -> f64 {
    (w.entries().adjoint() * m.matrix() * w.entries())[(0, 0)].re
}

/// Eigenvector relaxation: replaces the per-entry modulus constraint by a
/// single unit-norm constraint, solved by the eigenvector of the smallest
/// eigenvalue (for a concave kernel that is the eigenvalue of largest
/// magnitude). The eigenvector's complex phases, referenced to the first
/// entry, are the phase estimate.
pub fn emi_relax(m: &HermitianMatrix) -> Result<TorusVector> {
    let decomp = eigh(m.matrix());
    let radius = decomp.spectral_radius();
    let gap = decomp.values[1] - decomp.values[0];
    let tol = DEFINITENESS_REL_TOL * radius;
    if gap <= tol {
        return Err(Error::AmbiguousEigenvector { gap, tol });
    }
    let v = decomp.vectors.column(0).clone_owned();
    Ok(TorusVector::from_unit_unchecked(phase_extract_vector(&v)).reference_first())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{kl_kernel, ls_kernel};
    use crate::synth::{build_sigma, SceneModel};
    use crate::types::tests::{next_angle, random_hermitian};
    use crate::types::wrap_angle;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_torus(p: usize, state: &mut u64) -> TorusVector {
        let phases: Vec<f64> = (0..p).map(|_| next_angle(state)).collect();
        TorusVector::from_phases(&phases).unwrap()
    }

    fn exact_ls_kernel(p: usize, rho: f64, state: &mut u64) -> (HermitianMatrix, TorusVector) {
        let model = SceneModel::exponential(p, rho).unwrap();
        let theta: Vec<f64> = (0..p).map(|_| next_angle(state)).collect();
        let sigma = build_sigma(&model, &theta).unwrap();
        (ls_kernel(&sigma), TorusVector::from_phases(&theta).unwrap())
    }

    fn definite_kernel(p: usize, seed: u64, negative: bool) -> HermitianMatrix {
        let h = random_hermitian(p, seed);
        let mut psd = h.matrix() * h.matrix().adjoint();
        if negative {
            psd = -psd;
        }
        HermitianMatrix::from_hermitian_unchecked(psd)
    }

    fn indefinite_kernel(p: usize, seed: u64) -> HermitianMatrix {
        let h = random_hermitian(p, seed);
        let e = eigh(h.matrix());
        // random Hermitian matrices have eigenvalues of both signs
        assert!(e.min() < 0.0 && e.max() > 0.0);
        h
    }

    #[test]
    fn two_image_case_reduces_to_naive_phase() {
        let sigma = HermitianMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[
                c(1.0, 0.0),
                Complex64::from_polar(1.0, -FRAC_PI_2),
                Complex64::from_polar(1.0, FRAC_PI_2),
                c(1.0, 0.0),
            ],
        ))
        .unwrap();
        let m = ls_kernel(&sigma);
        let report = mm_solve(&m, &MmConfig::default()).unwrap();
        let phases = report.w.phases();
        assert_abs_diff_eq!(phases[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phases[1], FRAC_PI_2, epsilon = 1e-9);
        // two images: the linked phase equals the naive estimate
        assert_abs_diff_eq!(phases[1], sigma.entry(1, 0).arg(), epsilon = 1e-9);
    }

    #[test]
    fn recovers_phases_from_noise_free_ls_kernel() {
        let mut state = 31u64;
        let (m, w0) = exact_ls_kernel(10, 0.9, &mut state);
        let cfg = MmConfig {
            tol: 1e-14,
            max_iter: 2000,
            ..MmConfig::default()
        };
        let report = mm_solve(&m, &cfg).unwrap();
        let err = report.w.max_angle_error(&w0.reference_first());
        assert!(err < 1e-6, "max angle error {err:e}");
        assert!(report.converged);
    }

    #[test]
    fn recovers_phases_from_noise_free_kl_kernel() {
        let mut state = 87u64;
        let model = SceneModel::exponential(8, 0.8).unwrap();
        let theta: Vec<f64> = (0..8).map(|_| next_angle(&mut state)).collect();
        let sigma = build_sigma(&model, &theta).unwrap();
        let m = kl_kernel(&sigma).unwrap();
        let cfg = MmConfig {
            tol: 1e-14,
            max_iter: 5000,
            ..MmConfig::default()
        };
        let report = mm_solve(&m, &cfg).unwrap();
        let truth = TorusVector::from_phases(&theta).unwrap().reference_first();
        let err = report.w.max_angle_error(&truth);
        assert!(err < 1e-6, "max angle error {err:e}");
    }

    #[test]
    fn beats_exhaustive_grid_on_small_instance() {
        let m = definite_kernel(3, 5, false);
        let report = mm_solve(&m, &MmConfig::default()).unwrap();
        let final_obj = *report.objective_trace.last().unwrap();

        let steps = 360;
        let mut best = f64::INFINITY;
        for a in 0..steps {
            let t2 = -PI + (a as f64 + 1.0) * (2.0 * PI / steps as f64);
            for b in 0..steps {
                let t3 = -PI + (b as f64 + 1.0) * (2.0 * PI / steps as f64);
                let w = TorusVector::from_phases(&[0.0, t2, t3]).unwrap();
                best = best.min(quadratic_value(&m, &w));
            }
        }
        assert!(
            final_obj <= best + 1e-3,
            "mm {final_obj} vs grid {best}"
        );
    }

    #[test]
    fn objective_trace_is_monotone_for_all_branches() {
        for seed in 0..10u64 {
            for (kernel, safeguard) in [
                (definite_kernel(6, seed, false), Safeguard::EigShift),
                (definite_kernel(6, seed + 100, true), Safeguard::EigShift),
                (indefinite_kernel(6, seed + 200), Safeguard::EigShift),
                (indefinite_kernel(6, seed + 300), Safeguard::PosNegSplit),
            ] {
                let cfg = MmConfig {
                    safeguard,
                    ..MmConfig::default()
                };
                let report = mm_solve(&kernel, &cfg).unwrap();
                for pair in report.objective_trace.windows(2) {
                    assert!(
                        pair[1] <= pair[0] + 1e-12 * pair[0].abs(),
                        "trace increased: {} -> {}",
                        pair[0],
                        pair[1]
                    );
                }
            }
        }
    }

    #[test]
    fn safeguards_produce_identical_iterations() {
        // The split majorizer recombines to the eigen-shifted one.
        let m = indefinite_kernel(5, 71);
        let shift = mm_solve(
            &m,
            &MmConfig {
                safeguard: Safeguard::EigShift,
                ..MmConfig::default()
            },
        )
        .unwrap();
        let split = mm_solve(
            &m,
            &MmConfig {
                safeguard: Safeguard::PosNegSplit,
                ..MmConfig::default()
            },
        )
        .unwrap();
        assert_eq!(shift.iterations, split.iterations);
        assert!(shift.w.max_angle_error(&split.w) < 1e-9);
    }

    #[test]
    fn none_safeguard_rejects_indefinite_kernels() {
        let m = indefinite_kernel(4, 13);
        let cfg = MmConfig {
            safeguard: Safeguard::None,
            ..MmConfig::default()
        };
        assert!(matches!(mm_solve(&m, &cfg), Err(Error::IndefiniteKernel)));
    }

    #[test]
    fn surrogate_majorizes_convex_quadratic() {
        let mut state = 3u64;
        let m = definite_kernel(5, 23, false);
        let lambda_max = eigh(m.matrix()).max();
        let wt = random_torus(5, &mut state);
        let f = |w: &TorusVector| quadratic_value(&m, w);
        let g = |w: &TorusVector| {
            let shifted = m.matrix()
                - DMatrix::<Complex64>::identity(5, 5).map(|z| z * lambda_max);
            let lin = (w.entries().adjoint() * &shifted * wt.entries())[(0, 0)].re;
            let anchor = (wt.entries().adjoint() * &shifted * wt.entries())[(0, 0)].re;
            f(&wt) + 2.0 * lin - 2.0 * anchor
        };
        assert_abs_diff_eq!(g(&wt), f(&wt), epsilon = 1e-10);
        for _ in 0..100 {
            let w = random_torus(5, &mut state);
            assert!(g(&w) >= f(&w) - 1e-10);
        }
    }

    #[test]
    fn phase_projection_solves_linear_subproblem() {
        // phi(w_bar) attains the per-entry grid minimum of -Re(w^H w_bar)
        let mut state = 17u64;
        let p = 4;
        let w_bar = nalgebra::DVector::from_fn(p, |_, _| {
            Complex64::new(next_angle(&mut state), next_angle(&mut state))
        });
        let proj = phase_extract_vector(&w_bar);
        let objective = |w: &nalgebra::DVector<Complex64>| {
            -(w.adjoint() * &w_bar)[(0, 0)].re
        };
        let at_proj = objective(&proj);

        let steps = (2.0 * PI / 1e-3) as usize;
        let mut best = f64::INFINITY;
        for q in 0..p {
            // entries decouple: scan each angle independently
            let mut entry_best = f64::INFINITY;
            for k in 0..steps {
                let t = -PI + (k as f64) * 1e-3;
                let inner = (Complex64::from_polar(1.0, t).conj() * w_bar[q]).re;
                entry_best = entry_best.min(-inner);
            }
            best = if best.is_infinite() { entry_best } else { best + entry_best };
        }
        assert!(at_proj <= best + 1e-5);
    }

    #[test]
    fn eigen_shift_leaves_iterates_unchanged() {
        // Any spectral shift within the shifted-majorizer family yields the
        // same iteration matrix, hence the same sequence.
        let mut state = 9u64;
        let m = definite_kernel(5, 37, false);
        let w0 = random_torus(5, &mut state);
        let cfg = MmConfig::default();
        let base = mm_solve_from(&m, &cfg, &w0).unwrap();
        for shift in [0.5, -0.25, 3.0] {
            let shifted = HermitianMatrix::from_hermitian_unchecked(
                m.matrix() + DMatrix::<Complex64>::identity(5, 5).map(|z| z * shift),
            );
            if eigh(shifted.matrix()).max() <= 0.0 {
                continue; // leaves the shift family
            }
            let moved = mm_solve_from(&shifted, &cfg, &w0).unwrap();
            assert!(base.w.max_angle_error(&moved.w) < 1e-12);
        }
    }

    #[test]
    fn iterates_are_global_phase_equivariant() {
        let mut state = 25u64;
        let (m, _) = exact_ls_kernel(6, 0.8, &mut state);
        let w0 = random_torus(6, &mut state);
        let alpha = 1.234;
        let rot = Complex64::from_polar(1.0, alpha);
        let w0_shifted = TorusVector::new(w0.entries().map(|z| z * rot)).unwrap();
        let cfg = MmConfig::default();
        let a = mm_solve_from(&m, &cfg, &w0).unwrap();
        let b = mm_solve_from(&m, &cfg, &w0_shifted).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert!(a.w.max_angle_error(&b.w) < 1e-9);
    }

    #[test]
    fn zero_projection_convention_is_flagged() {
        let m = HermitianMatrix::from_real_diagonal(&[3.0, 1.0, 2.0]);
        let report = mm_solve(&m, &MmConfig::default()).unwrap();
        assert!(report.hit_zero_phase);
        for z in report.w.entries().iter() {
            assert_eq!(*z, c(1.0, 0.0));
        }
    }

    #[test]
    fn warm_start_uses_first_column_phases() {
        let mut state = 55u64;
        let (m, w0) = exact_ls_kernel(8, 0.9, &mut state);
        let cfg = MmConfig {
            init: MmInit::LeadingColumnPhases,
            ..MmConfig::default()
        };
        let report = mm_solve(&m, &cfg).unwrap();
        let err = report.w.max_angle_error(&w0.reference_first());
        assert!(err < 1e-5, "max angle error {err:e}");
    }

    #[test]
    fn emi_on_diagonal_kernel_exposes_zero_convention() {
        let m = HermitianMatrix::from_real_diagonal(&[3.0, 1.0, 2.0]);
        let w = emi_relax(&m).unwrap();
        // eigenvector e2 has zero entries; their phases map to 1
        for z in w.entries().iter() {
            assert_eq!(*z, c(1.0, 0.0));
        }
    }

    #[test]
    fn emi_matches_mm_on_noise_free_kernels() {
        let mut state = 61u64;
        for _ in 0..5 {
            let (m, w0) = exact_ls_kernel(5, 0.85, &mut state);
            let emi = emi_relax(&m).unwrap();
            let mm = mm_solve(&m, &MmConfig::default()).unwrap();
            assert!(emi.max_angle_error(&mm.w) < 1e-3);
            assert!(emi.max_angle_error(&w0.reference_first()) < 1e-3);
        }
    }

    #[test]
    fn emi_eigenvector_is_rayleigh_minimizer() {
        let mut state = 5u64;
        let m = definite_kernel(8, 3, false);
        let w = emi_relax(&m).unwrap();
        let decomp = eigh(m.matrix());
        let v = decomp.vectors.column(0).clone_owned();
        // returned phases match the extreme eigenvector's phases
        let oracle =
            TorusVector::from_unit_unchecked(phase_extract_vector(&v)).reference_first();
        assert!(w.max_angle_error(&oracle) < 1e-12);
        // and that eigenvector beats random unit vectors
        let rayleigh =
            |v: &nalgebra::DVector<Complex64>| (v.adjoint() * m.matrix() * v)[(0, 0)].re / v.norm_squared();
        let base = rayleigh(&v);
        for _ in 0..50 {
            let probe = nalgebra::DVector::from_fn(8, |_, _| {
                Complex64::new(next_angle(&mut state), next_angle(&mut state))
            });
            assert!(rayleigh(&probe) >= base - 1e-10);
        }
    }

    #[test]
    fn emi_rejects_ambiguous_extreme_eigenvalue() {
        let m = HermitianMatrix::from_real_diagonal(&[1.0, 1.0, 2.0]);
        assert!(matches!(
            emi_relax(&m),
            Err(Error::AmbiguousEigenvector { .. })
        ));
    }

    #[test]
    fn wrapped_angle_errors_are_symmetric() {
        let a = TorusVector::from_phases(&[0.0, PI - 0.05]).unwrap();
        let b = TorusVector::from_phases(&[0.0, -PI + 0.05]).unwrap();
        assert_abs_diff_eq!(a.max_angle_error(&b), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(
            wrap_angle((PI - 0.05) - (-PI + 0.05)).abs(),
            0.1,
            epsilon = 1e-12
        );
    }
}
