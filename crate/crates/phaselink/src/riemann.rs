//! First-order Riemannian optimization on the torus of unit-modulus complex
//! vectors: tangent-space primitives (projection, metric, transport,
//! retraction) and gradient-descent / conjugate-gradient solvers with Armijo
//! backtracking. Works with any objective, including the non-quadratic WLS.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mm::SolveReport;
use crate::objectives::Objective;
use crate::types::{phase_extract_vector, TorusVector};

/// Entrywise tolerance on `Re(direction o conj(base))` for tangency.
pub const TANGENCY_TOL: f64 = 1e-10;

/// A tangent vector at a point of the torus: entrywise orthogonal (in the
/// real sense) to the base point.
#[derive(Clone, Debug)]
pub struct TangentVector {
    base: TorusVector,
    direction: DVector<Complex64>,
}

impl TangentVector {
    /// Validates entrywise tangency within [`TANGENCY_TOL`].
    pub fn new(base: TorusVector, direction: DVector<Complex64>) -> Result<Self> {
        let scale = direction
            .iter()
            .map(|z| z.norm())
            .fold(1.0f64, f64::max);
        for q in 0..direction.len() {
            let radial = (direction[q] * base.entries()[q].conj()).re;
            if radial.abs() > TANGENCY_TOL * scale {
                return Err(Error::InvalidConfig(format!(
                    "direction is not tangent at entry {q}: radial component {radial:e}"
                )));
            }
        }
        Ok(Self { base, direction })
    }

    fn from_projected(base: TorusVector, direction: DVector<Complex64>) -> Self {
        Self { base, direction }
    }

    pub fn base(&self) -> &TorusVector {
        &self.base
    }

    pub fn direction(&self) -> &DVector<Complex64> {
        &self.direction
    }

    pub fn norm(&self) -> f64 {
        self.direction.norm()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            base: self.base.clone(),
            direction: self.direction.map(|z| z * factor),
        }
    }
}

/// Riemannian metric: the real part of the Euclidean inner product.
pub fn inner(a: &TangentVector, b: &TangentVector) -> f64 {
    (a.direction.adjoint() * &b.direction)[(0, 0)].re
}

/// Orthogonal projection of an ambient vector onto the tangent space at `w`:
/// `v - Re(v o conj(w)) o w`.
pub fn project_to_tangent(w: &TorusVector, v: &DVector<Complex64>) -> TangentVector {
    let p = w.dim();
    let mut out = v.clone();
    for q in 0..p {
        let radial = (v[q] * w.entries()[q].conj()).re;
        out[q] -= w.entries()[q] * radial;
    }
    TangentVector::from_projected(w.clone(), out)
}

/// Riemannian gradient: projection of the Euclidean gradient onto the
/// tangent space at `w`.
pub fn riemannian_gradient(obj: &Objective, w: &TorusVector) -> TangentVector {
    let euclid = obj.euclidean_gradient(w);
    project_to_tangent(w, &euclid)
}

/// Parallel transport (projection flavor): maps a tangent vector at its base
/// point into the tangent space at `to`.
pub fn transport(xi: &TangentVector, to: &TorusVector) -> TangentVector {
    project_to_tangent(to, &xi.direction)
}

/// Retraction: `phi(w + xi)`, the entrywise projection back to the torus.
/// Zero sums fall back to phase 1.
pub fn retract(w: &TorusVector, xi: &TangentVector) -> TorusVector {
    retract_flagged(w, xi).0
}

fn retract_flagged(w: &TorusVector, xi: &TangentVector) -> (TorusVector, bool) {
    let sum = w.entries() + &xi.direction;
    let hit_zero = sum.iter().any(|z| z.re == 0.0 && z.im == 0.0);
    (
        TorusVector::from_unit_unchecked(phase_extract_vector(&sum)),
        hit_zero,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RiemannMethod {
    Gd,
    #[default]
    Cg,
}

/// Backtracking line-search parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmijoParams {
    pub initial_step: f64,
    pub contraction: f64,
    pub slope: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            contraction: 0.5,
            slope: 1e-4,
            max_backtracks: 30,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RiemannConfig {
    pub method: RiemannMethod,
    pub max_iter: usize,
    /// Stopping threshold on the Riemannian gradient norm.
    pub grad_tol: f64,
    pub armijo: ArmijoParams,
    /// Force a steepest-descent restart every k accepted steps (1 makes the
    /// conjugate-gradient method coincide with gradient descent). `None`
    /// restarts only on non-descent directions.
    pub cg_restart_every: Option<usize>,
}

impl Default for RiemannConfig {
    fn default() -> Self {
        Self {
            method: RiemannMethod::Cg,
            max_iter: 1000,
            grad_tol: 1e-7,
            armijo: ArmijoParams::default(),
            cg_restart_every: None,
        }
    }
}

impl RiemannConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.armijo;
        if !(a.initial_step > 0.0) {
            return Err(Error::InvalidConfig("armijo initial_step must be positive".into()));
        }
        if !(a.contraction > 0.0 && a.contraction < 1.0) {
            return Err(Error::InvalidConfig("armijo contraction must lie in (0, 1)".into()));
        }
        if !(a.slope > 0.0 && a.slope <= 1.0) {
            return Err(Error::InvalidConfig("armijo slope must lie in (0, 1]".into()));
        }
        if self.grad_tol <= 0.0 {
            return Err(Error::InvalidConfig("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Minimizes the objective over the torus by Riemannian first-order descent
/// from `w0`. Accepted steps satisfy the Armijo decrease condition; the
/// conjugate-gradient variant combines the transported previous direction
/// with a Hestenes-Stiefel coefficient and restarts on non-descent.
pub fn riemann_solve(
    obj: &Objective,
    cfg: &RiemannConfig,
    w0: &TorusVector,
) -> Result<SolveReport> {
    cfg.validate()?;
    assert_eq!(obj.dim(), w0.dim(), "start point dimension mismatch");

    let mut w = w0.clone();
    let mut f = obj.value(&w);
    let mut trace = vec![f];
    let mut grad = riemannian_gradient(obj, &w);
    let mut dir: Option<TangentVector> = None;
    let mut steps_since_restart = 0usize;
    let mut hit_zero = false;
    let mut converged = false;
    let mut iterations = 0usize;

    for _ in 0..cfg.max_iter {
        let grad_norm = grad.norm();
        if grad_norm < cfg.grad_tol {
            converged = true;
            break;
        }

        // Direction: steepest descent, or the conjugate combination when one
        // is staged; fall back to steepest descent if it fails to descend.
        let mut direction = match dir.take() {
            Some(d) => d,
            None => grad.scaled(-1.0),
        };
        let mut slope_inner = inner(&grad, &direction);
        if slope_inner >= 0.0 {
            direction = grad.scaled(-1.0);
            slope_inner = inner(&grad, &direction);
            steps_since_restart = 0;
        }

        // Armijo backtracking along the retracted ray.
        let mut step = cfg.armijo.initial_step;
        let mut accepted = None;
        for _ in 0..cfg.armijo.max_backtracks {
            let (candidate, zeroed) = retract_flagged(&w, &direction.scaled(step));
            let f_new = obj.value(&candidate);
            if f_new <= f + cfg.armijo.slope * step * slope_inner {
                accepted = Some((candidate, f_new, zeroed));
                break;
            }
            step *= cfg.armijo.contraction;
        }
        let Some((w_new, f_new, zeroed)) = accepted else {
            // Exhausted backtracking: keep the current (best) iterate.
            converged = false;
            break;
        };
        hit_zero |= zeroed;

        let grad_new = riemannian_gradient(obj, &w_new);
        iterations += 1;
        steps_since_restart += 1;

        dir = match cfg.method {
            RiemannMethod::Gd => None,
            RiemannMethod::Cg => {
                let forced_restart = cfg
                    .cg_restart_every
                    .is_some_and(|k| steps_since_restart >= k);
                if forced_restart {
                    steps_since_restart = 0;
                    None
                } else {
                    // Hestenes-Stiefel with transported quantities.
                    let g_prev = transport(&grad, &w_new);
                    let d_prev = transport(&direction, &w_new);
                    let y = TangentVector::from_projected(
                        w_new.clone(),
                        grad_new.direction() - g_prev.direction(),
                    );
                    let denom = inner(&d_prev, &y);
                    if denom.abs() < f64::MIN_POSITIVE.sqrt() {
                        None
                    } else {
                        let beta = inner(&grad_new, &y) / denom;
                        Some(TangentVector::from_projected(
                            w_new.clone(),
                            grad_new.direction().map(|z| -z)
                                + d_prev.direction().map(|z| z * beta),
                        ))
                    }
                }
            }
        };

        w = w_new;
        f = f_new;
        grad = grad_new;
        trace.push(f);
    }

    Ok(SolveReport {
        w: w.reference_first(),
        iterations,
        objective_trace: trace,
        converged,
        hit_zero_phase: hit_zero,
    })
}
