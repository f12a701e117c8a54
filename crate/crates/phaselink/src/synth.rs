//! Synthetic stacks and patches with known ground truth: exponential
//! temporal coherence, per-date phases from a uniform vector or a spatial
//! ramp, Gaussian or Gamma-textured scaled-Gaussian samples.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::eig::sqrt_psd;
use crate::error::{Error, Result};
use crate::stack::ImageStack;
use crate::types::{HermitianMatrix, PixelPatch};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coherence {
    /// `Upsilon[q, l] = rho^|q - l|`, positive semi-definite for rho in (0, 1].
    Exponential { rho: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Texture {
    /// Plain circular Gaussian samples.
    #[default]
    None,
    /// Scaled Gaussian: each sample is multiplied by the square root of a
    /// Gamma(shape) draw normalized to unit mean. Smaller shapes give
    /// heavier tails.
    Gamma { shape: f64 },
}

/// Ground-truth per-date phases over the image plane.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseField {
    /// The same phase vector at every pixel.
    Uniform(Vec<f64>),
    /// A smooth spatial ramp that accumulates linearly over the dates:
    /// `theta_q(r, c) = ramp(r, c) * q / (p - 1)` with
    /// `ramp(r, c) = amplitude * (r / rows + c / cols) / 2`.
    LinearRamp { amplitude: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneModel {
    pub p: usize,
    pub coherence: Coherence,
    /// Per-date standard deviations.
    pub sigmas: Vec<f64>,
    pub phase_field: PhaseField,
    pub texture: Texture,
}

impl SceneModel {
    /// Unit-power scene with exponential coherence, flat phases, Gaussian
    /// samples.
    pub fn exponential(p: usize, rho: f64) -> Result<Self> {
        let model = Self {
            p,
            coherence: Coherence::Exponential { rho },
            sigmas: vec![1.0; p],
            phase_field: PhaseField::Uniform(vec![0.0; p]),
            texture: Texture::None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidScene("p must be positive".into()));
        }
        let Coherence::Exponential { rho } = self.coherence;
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidScene(format!(
                "exponential coherence needs rho in (0, 1], got {rho}"
            )));
        }
        if self.sigmas.len() != self.p {
            return Err(Error::InvalidScene(format!(
                "expected {} sigmas, got {}",
                self.p,
                self.sigmas.len()
            )));
        }
        if self.sigmas.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidScene("sigmas must be strictly positive".into()));
        }
        match &self.phase_field {
            PhaseField::Uniform(theta) if theta.len() != self.p => {
                return Err(Error::InvalidScene(format!(
                    "uniform phase field needs {} entries, got {}",
                    self.p,
                    theta.len()
                )));
            }
            _ => {}
        }
        if let Texture::Gamma { shape } = self.texture {
            if shape <= 0.0 {
                return Err(Error::InvalidScene(format!(
                    "gamma texture shape must be positive, got {shape}"
                )));
            }
        }
        Ok(())
    }

    /// Coherence matrix.
    pub fn upsilon(&self) -> DMatrix<f64> {
        let Coherence::Exponential { rho } = self.coherence;
        DMatrix::from_fn(self.p, self.p, |q, l| rho.powi(q.abs_diff(l) as i32))
    }

    /// Coherence scaled by the standard deviations: the modulus of the true
    /// covariance matrix.
    pub fn psi(&self) -> DMatrix<f64> {
        let upsilon = self.upsilon();
        DMatrix::from_fn(self.p, self.p, |q, l| {
            upsilon[(q, l)] * self.sigmas[q] * self.sigmas[l]
        })
    }

    /// Ground-truth phase vector at a pixel.
    pub fn theta_at(&self, row: usize, col: usize, rows: usize, cols: usize) -> Vec<f64> {
        match &self.phase_field {
            PhaseField::Uniform(theta) => theta.clone(),
            PhaseField::LinearRamp { amplitude } => {
                let ramp = amplitude
                    * (row as f64 / rows.max(1) as f64 + col as f64 / cols.max(1) as f64)
                    / 2.0;
                (0..self.p)
                    .map(|q| ramp * q as f64 / (self.p.max(2) - 1) as f64)
                    .collect()
            }
        }
    }
}

/// The structured covariance `Psi o (w_theta w_theta^H)`: coherence modulus
/// with the phase-difference structure imprinted. Satisfies exact phase
/// closure by construction.
pub fn build_sigma(model: &SceneModel, theta: &[f64]) -> Result<HermitianMatrix> {
    model.validate()?;
    if theta.len() != model.p {
        return Err(Error::InvalidScene(format!(
            "expected {} phases, got {}",
            model.p,
            theta.len()
        )));
    }
    let psi = model.psi();
    let m = DMatrix::from_fn(model.p, model.p, |q, l| {
        Complex64::from_polar(psi[(q, l)], theta[q] - theta[l])
    });
    Ok(HermitianMatrix::from_hermitian_unchecked(m))
}

/// Draws n independent samples `x_i = sqrt(tau_i) L z_i` with `L` a
/// Hermitian square root of the structured covariance, `z` standard
/// circular complex Gaussian, and `tau` the texture multiplier.
/// Fully determined by the seed.
pub fn sample_patch(
    model: &SceneModel,
    theta: &[f64],
    n: usize,
    seed: u64,
) -> Result<PixelPatch> {
    let sigma = build_sigma(model, theta)?;
    let factor = sqrt_psd(sigma.matrix())?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_patch_with_rng(model, &factor, n, &mut rng)
}

fn sample_patch_with_rng(
    model: &SceneModel,
    factor: &DMatrix<Complex64>,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<PixelPatch> {
    if n == 0 {
        return Err(Error::EmptyPatch);
    }
    let p = model.p;
    let gamma = match model.texture {
        Texture::None => None,
        Texture::Gamma { shape } => Some(
            Gamma::new(shape, 1.0 / shape)
                .map_err(|e| Error::InvalidScene(format!("gamma texture: {e}")))?,
        ),
    };
    let mut samples = DMatrix::<Complex64>::zeros(p, n);
    for i in 0..n {
        let z = DVector::from_fn(p, |_, _| standard_complex(rng));
        let mut x = factor * z;
        if let Some(g) = &gamma {
            let tau: f64 = g.sample(rng);
            let scale = tau.sqrt();
            x *= Complex64::new(scale, 0.0);
        }
        samples.set_column(i, &x);
    }
    PixelPatch::from_matrix(samples)
}

/// Standard circular complex Gaussian: unit second moment `E|z|^2 = 1`.
fn standard_complex(rng: &mut ChaCha12Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// A rendered synthetic stack together with its referenced ground-truth
/// phases (`theta_q - theta_1` per pixel).
pub struct RenderedScene {
    pub stack: ImageStack,
    /// rows x cols x p referenced true phases.
    pub truth: Array3<f64>,
}

/// Renders a rows x cols stack of independent pixels. Every pixel draws its
/// own substream derived from `(seed, row, col)`, so rendering is
/// order-independent and reproducible. Samples are rounded to f32 precision
/// at generation, matching the on-disk stack format.
pub fn render_stack(
    model: &SceneModel,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<RenderedScene> {
    model.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidScene("image dimensions must be positive".into()));
    }
    let p = model.p;
    let uniform_factor = match &model.phase_field {
        PhaseField::Uniform(theta) => Some(sqrt_psd(build_sigma(model, theta)?.matrix())?),
        PhaseField::LinearRamp { .. } => None,
    };

    let mut stack = ImageStack::zeros(p, rows, cols)?;
    let mut truth = Array3::<f64>::zeros((rows, cols, p));
    for r in 0..rows {
        for c in 0..cols {
            let theta = model.theta_at(r, c, rows, cols);
            let factor = match &uniform_factor {
                Some(f) => f.clone(),
                None => sqrt_psd(build_sigma(model, &theta)?.matrix())?,
            };
            let mut rng = pixel_rng(seed, r as u64, c as u64);
            let x = sample_patch_with_rng(model, &factor, 1, &mut rng)?;
            for q in 0..p {
                let z = x.samples()[(q, 0)];
                stack.set(r, c, q, quantize_c64(z));
                truth[(r, c, q)] = theta[q] - theta[0];
            }
        }
    }
    Ok(RenderedScene { stack, truth })
}

fn quantize_c64(z: Complex64) -> Complex64 {
    Complex64::new(z.re as f32 as f64, z.im as f32 as f64)
}

/// Substream derivation: absorb seed, row, and column into a splitmix64
/// chain and expand to a 32-byte ChaCha key.
pub fn pixel_rng(seed: u64, row: u64, col: u64) -> ChaCha12Rng {
    let mut state = seed;
    let mut absorb = |v: u64, s: &mut u64| {
        *s ^= v.wrapping_mul(0x9E3779B97F4A7C15);
        splitmix64(s);
    };
    absorb(0x706C6B7374616B63, &mut state); // domain tag
    absorb(row, &mut state);
    absorb(col, &mut state);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
