//! End-to-end processing: slide a window over a stack, run the
//! estimator -> regularizer -> objective -> solver chain per patch, and emit
//! referenced interferograms with diagnostics, plus the naive per-pair
//! baseline.
//!
//! Emitted phases snap to a dyadic grid (about 5e-7 rad) and pair images
//! wrap with the grid-aligned period, so every output interferogram triplet
//! closes exactly, bit for bit, even after f32 serialization.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig, EstimatorKind};
use crate::mm::{emi_relax, mm_solve, MmConfig};
use crate::objectives::{kl_kernel, ls_kernel, Objective, ObjectiveKind};
use crate::regularizers::RegularizerSpec;
use crate::riemann::{riemann_solve, RiemannConfig};
use crate::stack::{write_mask_png, write_phase_png, write_real_image, write_real_stack, ImageStack};
use crate::types::{
    phase_closure_residual, wrap_angle, HermitianMatrix, PixelPatch, TorusVector,
};

/// Spacing of the emitted phase grid (radians).
pub const PHASE_QUANTUM: f64 = 1.0 / (1u64 << 21) as f64;

/// Wrap period of emitted interferograms: the largest grid multiple not
/// exceeding 2 pi. Under half a grid step short of 2 pi, so the wrapped
/// range stays inside `(-pi, pi]` while keeping wrapped values on the grid.
pub fn phase_period() -> f64 {
    (TAU / PHASE_QUANTUM).floor() * PHASE_QUANTUM
}

/// Snaps a referenced phase onto the emitted grid.
pub fn quantize_phase(x: f64) -> f64 {
    (wrap_angle(x) / PHASE_QUANTUM).round() * PHASE_QUANTUM
}

/// Wraps a grid-aligned phase difference into `(-P/2, P/2]` where P is the
/// grid period. Exact for grid inputs: results stay on the grid.
pub fn wrap_emitted(x: f64) -> f64 {
    let period = phase_period();
    let k = (x / period - 0.5).ceil();
    x - k * period
}

/// Per-pixel diagnostic flags.
pub mod flag {
    /// Window skipped (border policy).
    pub const NOT_PROCESSED: u8 = 0x01;
    /// Chain failed; phases fall back to the naive estimate.
    pub const FALLBACK_NAIVE: u8 = 0x02;
    /// The zero-to-one phase convention fired inside the solver.
    pub const ZERO_PHASE: u8 = 0x04;
    /// Solver stopped at its iteration cap.
    pub const NOT_CONVERGED: u8 = 0x08;
    /// Plug-in closure residual undefined (zero entry or p < 3).
    pub const CLOSURE_UNDEFINED: u8 = 0x10;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BorderPolicy {
    /// Process only centers whose full window fits inside the image.
    #[default]
    Skip,
    /// Clamp windows at the borders; n shrinks near the edges.
    Shrink,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    Mm(MmConfig),
    Riemann(RiemannConfig),
    Emi,
}

impl Default for SolverChoice {
    fn default() -> Self {
        SolverChoice::Mm(MmConfig::default())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub window_height: usize,
    pub window_width: usize,
    pub estimator: EstimatorConfig,
    pub regularizer: RegularizerSpec,
    pub objective: ObjectiveKind,
    pub solver: SolverChoice,
    pub border: BorderPolicy,
    /// Output pair selection; empty selects `(0, p-1)`.
    pub pairs: Vec<(usize, usize)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            window_height: 8,
            window_width: 8,
            estimator: EstimatorConfig::default(),
            regularizer: RegularizerSpec::none(),
            objective: ObjectiveKind::default(),
            solver: SolverChoice::default(),
            border: BorderPolicy::default(),
            pairs: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self, p: usize, rows: usize, cols: usize) -> Result<()> {
        if self.window_height == 0 || self.window_width == 0 {
            return Err(Error::InvalidConfig("window must be non-empty".into()));
        }
        if matches!(self.border, BorderPolicy::Skip)
            && (self.window_height > rows || self.window_width > cols)
        {
            return Err(Error::WindowTooLarge {
                wh: self.window_height,
                ww: self.window_width,
                rows,
                cols,
            });
        }
        self.estimator.validate()?;
        self.regularizer.validate(p)?;
        if self.estimator.kind == EstimatorKind::Tyler {
            let n = self.window_height * self.window_width;
            if n <= p {
                return Err(Error::InsufficientSamples { n, p });
            }
        }
        match &self.solver {
            SolverChoice::Mm(cfg) => {
                cfg.validate()?;
                if self.objective == ObjectiveKind::Wls {
                    return Err(Error::InvalidConfig(
                        "the majorization solver needs a quadratic kernel; \
                         pair wls with the riemann solver"
                            .into(),
                    ));
                }
            }
            SolverChoice::Riemann(cfg) => cfg.validate()?,
            SolverChoice::Emi => {
                if self.objective == ObjectiveKind::Wls {
                    return Err(Error::InvalidConfig(
                        "the eigenvector relaxation needs a quadratic kernel; \
                         pair wls with the riemann solver"
                            .into(),
                    ));
                }
            }
        }
        for &(q, l) in &self.pairs {
            if q >= p || l >= p {
                return Err(Error::ImageIndexOutOfRange {
                    index: q.max(l),
                    p,
                });
            }
        }
        Ok(())
    }

    pub fn effective_pairs(&self, p: usize) -> Vec<(usize, usize)> {
        if self.pairs.is_empty() {
            vec![(0, p - 1)]
        } else {
            self.pairs.clone()
        }
    }
}

/// Referenced solve of one patch through the configured chain.
pub struct ChainOutcome {
    pub w: TorusVector,
    pub converged: bool,
    pub hit_zero_phase: bool,
}

pub fn chain_solve(
    patch: &PixelPatch,
    estimator: &EstimatorConfig,
    regularizer: &RegularizerSpec,
    objective: ObjectiveKind,
    solver: &SolverChoice,
) -> Result<ChainOutcome> {
    let sigma_hat = estimate(patch, estimator)?;
    let sigma_tilde = regularizer.apply(&sigma_hat)?;
    solve_regularized(&sigma_tilde, objective, solver)
}

fn solve_regularized(
    sigma_tilde: &HermitianMatrix,
    objective: ObjectiveKind,
    solver: &SolverChoice,
) -> Result<ChainOutcome> {
    let kernel = |sigma: &HermitianMatrix| -> Result<HermitianMatrix> {
        match objective {
            ObjectiveKind::Kl => kl_kernel(sigma),
            ObjectiveKind::Ls => Ok(ls_kernel(sigma)),
            ObjectiveKind::Wls => Err(Error::NoQuadraticKernel("wls")),
        }
    };
    match solver {
        SolverChoice::Mm(cfg) => {
            let report = mm_solve(&kernel(sigma_tilde)?, cfg)?;
            Ok(ChainOutcome {
                w: report.w,
                converged: report.converged,
                hit_zero_phase: report.hit_zero_phase,
            })
        }
        SolverChoice::Riemann(cfg) => {
            let obj = Objective::build(objective, sigma_tilde.clone())?;
            let report = riemann_solve(&obj, cfg, &TorusVector::ones(sigma_tilde.dim()))?;
            Ok(ChainOutcome {
                w: report.w,
                converged: report.converged,
                hit_zero_phase: report.hit_zero_phase,
            })
        }
        SolverChoice::Emi => Ok(ChainOutcome {
            w: emi_relax(&kernel(sigma_tilde)?)?,
            converged: true,
            hit_zero_phase: false,
        }),
    }
}

/// Naive phase vector of a patch: the arguments of the sample covariance
/// first column (every date against the reference date).
pub fn naive_phases_from_patch(patch: &PixelPatch) -> Vec<f64> {
    let x = patch.samples();
    let p = patch.p();
    let mut phases = vec![0.0; p];
    for q in 1..p {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..patch.n() {
            acc += x[(q, i)] * x[(0, i)].conj();
        }
        phases[q] = if acc.re == 0.0 && acc.im == 0.0 {
            0.0
        } else {
            acc.arg()
        };
    }
    phases
}

/// One referenced interferogram set with diagnostics.
pub struct InterferogramSet {
    pub p: usize,
    pub rows: usize,
    pub cols: usize,
    pub pair_indices: Vec<(usize, usize)>,
    /// Wrapped phase-difference images matching `pair_indices`.
    pub pair_images: Vec<Array2<f64>>,
    /// Referenced per-date phases (grid-aligned).
    pub phases: Array3<f64>,
    pub flags: Array2<u8>,
    /// Phase-closure residual of the raw plug-in per window.
    pub closure: Array2<f64>,
}

impl InterferogramSet {
    /// Worst closure violation over all pixel triplets that can be formed
    /// from the emitted pairs (completing missing orientations by sign).
    /// Zero by construction: all pairs derive from one phase vector on the
    /// emitted grid.
    pub fn closure_residual_of_outputs(&self) -> f64 {
        let mut lookup = std::collections::HashMap::new();
        for (idx, &(q, l)) in self.pair_indices.iter().enumerate() {
            lookup.entry((q, l)).or_insert((idx, 1.0));
            lookup.entry((l, q)).or_insert((idx, -1.0));
        }
        let mut dates: Vec<usize> = self
            .pair_indices
            .iter()
            .flat_map(|&(q, l)| [q, l])
            .collect();
        dates.sort_unstable();
        dates.dedup();

        let mut worst = 0.0f64;
        for (ai, &a) in dates.iter().enumerate() {
            for (bi, &b) in dates.iter().enumerate().skip(ai + 1) {
                for &c in dates.iter().skip(bi + 1) {
                    let (Some(&(i1, s1)), Some(&(i2, s2)), Some(&(i3, s3))) = (
                        lookup.get(&(a, b)),
                        lookup.get(&(b, c)),
                        lookup.get(&(c, a)),
                    ) else {
                        continue;
                    };
                    for r in 0..self.rows {
                        for col in 0..self.cols {
                            if self.flags[(r, col)] & flag::NOT_PROCESSED != 0 {
                                continue;
                            }
                            let s = s1 * self.pair_images[i1][(r, col)]
                                + s2 * self.pair_images[i2][(r, col)]
                                + s3 * self.pair_images[i3][(r, col)];
                            worst = worst.max(wrap_emitted(s).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// Writes pair rasters (with PNG renders), the per-date phase stack, the
    /// flag mask, and the plug-in closure map into a directory.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (idx, &(q, l)) in self.pair_indices.iter().enumerate() {
            let base = format!("ifg_{q:03}_{l:03}");
            write_real_image(dir.join(format!("{base}.cofi")), &self.pair_images[idx])?;
            write_phase_png(dir.join(format!("{base}.png")), &self.pair_images[idx])?;
        }
        write_real_stack(dir.join("phases.cofi"), &self.phases)?;
        write_mask_png(dir.join("flags.png"), &self.flags)?;
        write_real_image(dir.join("closure.cofi"), &self.closure)?;
        write_phase_png(dir.join("closure.png"), &self.closure)?;
        Ok(())
    }
}

struct PixelOutcome {
    phases: Vec<f64>,
    flags: u8,
    closure: f64,
}

/// Runs the full chain over every window position. Windows are independent
/// and processed in parallel; outputs are deterministic for a given stack
/// and configuration regardless of scheduling.
pub fn run(stack: &ImageStack, cfg: &RunConfig) -> Result<InterferogramSet> {
    let (p, rows, cols) = (stack.p(), stack.rows(), stack.cols());
    if p < 2 {
        return Err(Error::InvalidConfig("phase linking needs p >= 2".into()));
    }
    cfg.validate(p, rows, cols)?;
    let pairs = cfg.effective_pairs(p);

    let centers: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .collect();

    let outcomes: Vec<PixelOutcome> = centers
        .par_iter()
        .map(|&(r, c)| process_center(stack, cfg, r, c))
        .collect();

    let mut phases = Array3::<f64>::zeros((rows, cols, p));
    let mut flags = Array2::<u8>::zeros((rows, cols));
    let mut closure = Array2::<f64>::zeros((rows, cols));
    for (idx, outcome) in outcomes.iter().enumerate() {
        let (r, c) = centers[idx];
        flags[(r, c)] = outcome.flags;
        closure[(r, c)] = outcome.closure;
        for q in 0..p {
            phases[(r, c, q)] = outcome.phases[q];
        }
    }

    let pair_images: Vec<Array2<f64>> = pairs
        .iter()
        .map(|&(q, l)| {
            Array2::from_shape_fn((rows, cols), |(r, c)| {
                wrap_emitted(phases[(r, c, q)] - phases[(r, c, l)])
            })
        })
        .collect();

    Ok(InterferogramSet {
        p,
        rows,
        cols,
        pair_indices: pairs,
        pair_images,
        phases,
        flags,
        closure,
    })
}

fn process_center(stack: &ImageStack, cfg: &RunConfig, r: usize, c: usize) -> PixelOutcome {
    let p = stack.p();
    let Some(patch) = extract_patch(
        stack,
        r,
        c,
        cfg.window_height,
        cfg.window_width,
        cfg.border,
    ) else {
        return PixelOutcome {
            phases: vec![0.0; p],
            flags: flag::NOT_PROCESSED,
            closure: 0.0,
        };
    };

    let mut flags = 0u8;

    // Plug-in closure residual map (before regularization).
    let closure = match estimate(&patch, &cfg.estimator) {
        Ok(sigma_hat) if p >= 3 => match phase_closure_residual(&sigma_hat) {
            Ok(v) => v,
            Err(_) => {
                flags |= flag::CLOSURE_UNDEFINED;
                0.0
            }
        },
        Ok(_) => {
            flags |= flag::CLOSURE_UNDEFINED;
            0.0
        }
        Err(_) => {
            flags |= flag::CLOSURE_UNDEFINED;
            0.0
        }
    };

    let solved = chain_solve(
        &patch,
        &cfg.estimator,
        &cfg.regularizer,
        cfg.objective,
        &cfg.solver,
    );
    let phases = match solved {
        Ok(outcome) => {
            if !outcome.converged {
                flags |= flag::NOT_CONVERGED;
            }
            if outcome.hit_zero_phase {
                flags |= flag::ZERO_PHASE;
            }
            outcome.w.phases()
        }
        Err(_) => {
            flags |= flag::FALLBACK_NAIVE;
            naive_phases_from_patch(&patch)
        }
    };
    PixelOutcome {
        phases: phases.into_iter().map(quantize_phase).collect(),
        flags,
        closure,
    }
}

fn extract_patch(
    stack: &ImageStack,
    r: usize,
    c: usize,
    wh: usize,
    ww: usize,
    border: BorderPolicy,
) -> Option<PixelPatch> {
    let (rows, cols, p) = (stack.rows(), stack.cols(), stack.p());
    let top = r as isize - ((wh as isize - 1) / 2);
    let left = c as isize - ((ww as isize - 1) / 2);
    let (r0, r1, c0, c1) = match border {
        BorderPolicy::Skip => {
            if top < 0
                || left < 0
                || top + wh as isize > rows as isize
                || left + ww as isize > cols as isize
            {
                return None;
            }
            (
                top as usize,
                top as usize + wh,
                left as usize,
                left as usize + ww,
            )
        }
        BorderPolicy::Shrink => (
            top.max(0) as usize,
            ((top + wh as isize).min(rows as isize)) as usize,
            left.max(0) as usize,
            ((left + ww as isize).min(cols as isize)) as usize,
        ),
    };
    let n = (r1 - r0) * (c1 - c0);
    let mut samples = DMatrix::<Complex64>::zeros(p, n);
    let mut i = 0;
    for rr in r0..r1 {
        for cc in c0..c1 {
            for q in 0..p {
                samples[(q, i)] = stack.get(rr, cc, q);
            }
            i += 1;
        }
    }
    PixelPatch::from_matrix(samples).ok()
}

/// The naive baseline for one pair: per window, the argument of the sample
/// covariance entry (q, l). Returns the image and a flag mask (degenerate
/// zero entries produce 0 with a flag; border skips are flagged).
pub fn naive_interferogram(
    stack: &ImageStack,
    q: usize,
    l: usize,
    window: (usize, usize),
    border: BorderPolicy,
) -> Result<(Array2<f64>, Array2<u8>)> {
    let (p, rows, cols) = (stack.p(), stack.rows(), stack.cols());
    if q >= p || l >= p {
        return Err(Error::ImageIndexOutOfRange { index: q.max(l), p });
    }
    if matches!(border, BorderPolicy::Skip) && (window.0 > rows || window.1 > cols) {
        return Err(Error::WindowTooLarge {
            wh: window.0,
            ww: window.1,
            rows,
            cols,
        });
    }
    let mut image = Array2::<f64>::zeros((rows, cols));
    let mut flags = Array2::<u8>::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let Some(patch) = extract_patch(stack, r, c, window.0, window.1, border) else {
                flags[(r, c)] = flag::NOT_PROCESSED;
                continue;
            };
            let x = patch.samples();
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..patch.n() {
                acc += x[(q, i)] * x[(l, i)].conj();
            }
            if acc.re == 0.0 && acc.im == 0.0 {
                flags[(r, c)] = flag::CLOSURE_UNDEFINED;
                image[(r, c)] = 0.0;
            } else {
                image[(r, c)] = acc.arg();
            }
        }
    }
    Ok((image, flags))
}

/// Phase-closure residual map of a (optionally regularized) plug-in over
/// the window grid. Residuals that are undefined (zero entries, as tapering
/// produces, or p < 3) are flagged and reported as 0.
pub fn closure_map(
    stack: &ImageStack,
    window: (usize, usize),
    border: BorderPolicy,
    estimator: &EstimatorConfig,
    regularizer: &RegularizerSpec,
) -> Result<(Array2<f64>, Array2<u8>)> {
    let (p, rows, cols) = (stack.p(), stack.rows(), stack.cols());
    estimator.validate()?;
    regularizer.validate(p)?;
    if matches!(border, BorderPolicy::Skip) && (window.0 > rows || window.1 > cols) {
        return Err(Error::WindowTooLarge {
            wh: window.0,
            ww: window.1,
            rows,
            cols,
        });
    }
    let mut image = Array2::<f64>::zeros((rows, cols));
    let mut flags = Array2::<u8>::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let Some(patch) = extract_patch(stack, r, c, window.0, window.1, border) else {
                flags[(r, c)] = flag::NOT_PROCESSED;
                continue;
            };
            let residual = estimate(&patch, estimator)
                .and_then(|s| regularizer.apply(&s))
                .and_then(|s| phase_closure_residual(&s));
            match residual {
                Ok(v) => image[(r, c)] = v,
                Err(_) => flags[(r, c)] = flag::CLOSURE_UNDEFINED,
            }
        }
    }
    Ok((image, flags))
}

/// Per-window naive phase vectors for the whole stack (every date against
/// date zero), on the same grid geometry as [`run`].
pub fn naive_phase_stack(
    stack: &ImageStack,
    window: (usize, usize),
    border: BorderPolicy,
) -> Result<(Array3<f64>, Array2<u8>)> {
    let (p, rows, cols) = (stack.p(), stack.rows(), stack.cols());
    if matches!(border, BorderPolicy::Skip) && (window.0 > rows || window.1 > cols) {
        return Err(Error::WindowTooLarge {
            wh: window.0,
            ww: window.1,
            rows,
            cols,
        });
    }
    let mut phases = Array3::<f64>::zeros((rows, cols, p));
    let mut flags = Array2::<u8>::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let Some(patch) = extract_patch(stack, r, c, window.0, window.1, border) else {
                flags[(r, c)] = flag::NOT_PROCESSED;
                continue;
            };
            for (q, v) in naive_phases_from_patch(&patch).into_iter().enumerate() {
                phases[(r, c, q)] = v;
            }
        }
    }
    Ok((phases, flags))
}
