//! Covariance-fitting interferometric phase linking.
//!
//! From a stack of co-registered complex images, estimate a covariance
//! plug-in per sliding-window patch, regularize it, and recover a
//! closure-consistent vector of complex phases by minimizing a matrix
//! distance (KL, LS, or weighted LS) over the torus of unit-modulus
//! vectors, via majorization-minimization, Riemannian first-order descent,
//! or an eigenvector relaxation.
//!
//! The [`pipeline`] module ties the stages into an end-to-end run and backs
//! the command-line interface; everything underneath is usable as a
//! library.

pub mod eig;
pub mod error;
pub mod estimators;
pub mod mc;
pub mod mm;
pub mod objectives;
pub mod pipeline;
pub mod regularizers;
pub mod riemann;
pub mod stack;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use estimators::{phase_only_scm, scm, to_correlation, tyler, EstimatorConfig, EstimatorKind};
pub use mm::{emi_relax, mm_solve, MmConfig, SolveReport};
pub use objectives::{kl_kernel, ls_kernel, Objective, ObjectiveKind};
pub use pipeline::{naive_interferogram, run, InterferogramSet, RunConfig, SolverChoice};
pub use regularizers::{
    lowrank_project, lowrank_truncate, shrink_identity, taper, RegularizerSpec, RegularizerStep,
};
pub use riemann::{retract, riemann_solve, riemannian_gradient, transport, RiemannConfig};
pub use stack::ImageStack;
pub use synth::{build_sigma, render_stack, sample_patch, SceneModel};
pub use types::{
    modulus, phase_closure_residual, phase_extract, wrap_angle, HermitianMatrix, PixelPatch,
    TorusVector,
};
