//! Gaussian noise models for the residuals, represented by a spectral
//! factor `f(theta)` with `f f^* = S` on a uniform frequency grid, and
//! sampled as a random Fourier series
//! `eta_n = M^{-1/2} sum_j f(theta_j) w_j e^{-i n theta_j}`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::complex_normal;
use crate::series::ComplexSeries;
use crate::spectral::{power_spectrum, spectral_factor, WelchConfig, Window};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Settings of [`build_noise_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Welch segment length, which is also the size of the native grid.
    pub grid: usize,
    pub overlap: f64,
    pub window: Window,
    /// Leading residuals dropped before estimation.
    pub trim: usize,
}

impl NoiseConfig {
    /// Defaults for a model of degree `p`: drop `max(p, 100)` samples.
    pub fn for_order(p: usize) -> Self {
        Self { grid: 256, overlap: 0.5, window: Window::Hann, trim: p.max(100) }
    }
}

/// A stationary Gaussian noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub dim: usize,
    pub dt: f64,
    /// Number of grid frequencies `theta_j = 2 pi j / grid`.
    pub grid: usize,
    /// Factors `f(theta_j)`, each `dim x dim` column-major, concatenated.
    pub factors: Vec<Complex64>,
    /// Real-valued target: samples are real with conjugate-symmetric factors.
    pub real: bool,
    /// Residuals dropped before estimation.
    pub trimmed: usize,
}

impl NoiseModel {
    pub fn from_factors(factors: &[DMatrix<Complex64>], dt: f64, real: bool) -> Result<Self> {
        let grid = factors.len();
        if grid == 0 {
            return invalid("a noise model needs at least one grid frequency");
        }
        let dim = factors[0].nrows();
        if dim == 0 || factors.iter().any(|f| f.shape() != (dim, dim)) {
            return invalid("spectral factors must be square with a common nonzero size");
        }
        if factors.iter().flat_map(|f| f.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("spectral factor has non-finite entries".into()));
        }
        if !(dt > 0.0) {
            return invalid("sampling interval must be positive");
        }
        let mut flat: Vec<Complex64> = factors.iter().flat_map(|f| f.iter().copied()).collect();
        if real {
            symmetrize(&mut flat, grid, dim);
        }
        Ok(Self { dim, dt, grid, factors: flat, real, trimmed: 0 })
    }

    /// White noise with covariance `sigma^2 I`.
    pub fn white(dim: usize, dt: f64, sigma: f64) -> Result<Self> {
        let f = DMatrix::<Complex64>::identity(dim, dim) * Complex64::new(sigma, 0.0);
        Self::from_factors(&[f], dt, false)
    }

    pub fn factor(&self, j: usize) -> DMatrix<Complex64> {
        let dd = self.dim * self.dim;
        DMatrix::from_column_slice(self.dim, self.dim, &self.factors[j * dd..(j + 1) * dd])
    }

    /// `S(theta_j) = f f^*`.
    pub fn spectrum(&self, j: usize) -> DMatrix<Complex64> {
        let f = self.factor(j);
        &f * f.adjoint()
    }

    /// Factor at an arbitrary frequency by periodic linear interpolation.
    /// Convex combinations of Hermitian semidefinite factors stay Hermitian
    /// semidefinite.
    pub fn factor_at(&self, theta: f64) -> DMatrix<Complex64> {
        let pos = theta.rem_euclid(2.0 * PI) / (2.0 * PI) * self.grid as f64;
        let j0 = (pos.floor() as usize) % self.grid;
        let j1 = (j0 + 1) % self.grid;
        let w = pos - pos.floor();
        self.factor(j0) * Complex64::new(1.0 - w, 0.0) + self.factor(j1) * Complex64::new(w, 0.0)
    }

    /// Lag-`h` covariance implied by the grid:
    /// `C(h) = grid^{-1} sum_j S(theta_j) e^{-i h theta_j}`.
    pub fn covariance(&self, h: i64) -> DMatrix<Complex64> {
        let mut c = DMatrix::<Complex64>::zeros(self.dim, self.dim);
        for j in 0..self.grid {
            let theta = 2.0 * PI * j as f64 / self.grid as f64;
            c += self.spectrum(j) * Complex64::from_polar(1.0, -(h as f64) * theta);
        }
        c / Complex64::new(self.grid as f64, 0.0)
    }

    /// Grid used to sample `n_steps`: the smallest power of two that is at
    /// least `4 n_steps` and at least the native grid.
    pub fn sampling_grid(&self, n_steps: usize) -> usize {
        (4 * n_steps).max(self.grid).next_power_of_two()
    }

    /// Samples a path of `n_steps` on the default sampling grid.
    pub fn sample<R: Rng + ?Sized>(&self, n_steps: usize, rng: &mut R) -> Result<ComplexSeries> {
        self.sample_on_grid(n_steps, self.sampling_grid(n_steps), rng)
    }

    /// Samples on an explicit grid of `m` frequencies. The path is exactly
    /// `m`-periodic in distribution, so `n_steps <= m` is required.
    pub fn sample_on_grid<R: Rng + ?Sized>(&self, n_steps: usize, m: usize, rng: &mut R) -> Result<ComplexSeries> {
        if n_steps == 0 {
            return invalid("noise path needs at least one step");
        }
        if n_steps > m {
            return invalid(format!("{n_steps} steps exceed the sampling grid of {m}; the path would repeat"));
        }
        let d = self.dim;
        let resampled: Vec<DMatrix<Complex64>> = if m == self.grid {
            (0..m).map(|j| self.factor(j)).collect()
        } else {
            (0..m).map(|j| self.factor_at(2.0 * PI * j as f64 / m as f64)).collect()
        };
        // Component-major spectra of f_j w_j.
        let mut cols = vec![vec![ZERO; m]; d];
        let mut w = vec![ZERO; d];
        for (j, f) in resampled.iter().enumerate() {
            w.iter_mut().for_each(|z| *z = complex_normal(rng));
            for a in 0..d {
                let mut acc = ZERO;
                for b in 0..d {
                    acc += f[(a, b)] * w[b];
                }
                cols[a][j] = acc;
            }
        }
        let fft = FftPlanner::new().plan_fft_forward(m);
        let scale = 1.0 / (m as f64).sqrt();
        for c in &mut cols {
            fft.process(c);
        }
        let mut data = Vec::with_capacity(n_steps * d);
        for n in 0..n_steps {
            for c in &cols {
                let v = c[n] * scale;
                data.push(if self.real { Complex64::new(std::f64::consts::SQRT_2 * v.re, 0.0) } else { v });
            }
        }
        ComplexSeries::new(d, self.dt, "noise", data)
    }
}

/// `f(theta_{M-j}) = conj(f(theta_j))`, so the real part of a sample has
/// the intended spectrum.
fn symmetrize(flat: &mut [Complex64], grid: usize, dim: usize) {
    let dd = dim * dim;
    let orig = flat.to_vec();
    for j in 0..grid {
        let k = (grid - j) % grid;
        for e in 0..dd {
            flat[j * dd + e] = (orig[j * dd + e] + orig[k * dd + e].conj()) * 0.5;
        }
    }
}

/// Estimates a noise model from residuals by the Welch periodogram and a
/// Hermitian square root per frequency.
pub fn build_noise_model(residuals: &ComplexSeries, cfg: &NoiseConfig) -> Result<NoiseModel> {
    if cfg.trim >= residuals.len() {
        return Err(Error::InsufficientData(format!(
            "trimming {} of {} residuals leaves nothing",
            cfg.trim,
            residuals.len()
        )));
    }
    let kept = residuals.slice(cfg.trim, residuals.len())?;
    if kept.len() < 8 * cfg.grid {
        return Err(Error::InsufficientData(format!(
            "{} residuals are fewer than 8 x {} needed for the requested resolution",
            kept.len(),
            cfg.grid
        )));
    }
    let welch = WelchConfig { segments: 0, segment_len: Some(cfg.grid), overlap: cfg.overlap, window: cfg.window };
    let s = power_spectrum(&kept, &welch)?;
    let factors = spectral_factor(&s)?;
    let real = kept.data().iter().all(|z| z.im == 0.0);
    let mut model = NoiseModel::from_factors(&factors, residuals.dt(), real)?;
    model.trimmed = cfg.trim;
    Ok(model)
}
