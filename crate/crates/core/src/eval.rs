//! Statistics and forecast-skill metrics for comparing full and reduced
//! model output.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{FitData, FitReport};
use crate::model::{expand_cascade, CascadeModel};
use crate::series::ComplexSeries;
use crate::spectral::{band_average, cross_spectrum, power_spectrum, WelchConfig};

/// Number of contiguous blocks used by the jackknife.
pub const JACKKNIFE_BLOCKS: usize = 20;

/// Per-mode mean energy `<|u_k|^2>` with block-jackknife standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySpectrum {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl EnergySpectrum {
    /// `|self_k / other_k - 1|` per mode.
    pub fn relative_mismatch(&self, other: &EnergySpectrum) -> Vec<f64> {
        self.mean.iter().zip(&other.mean).map(|(a, b)| (a / b - 1.0).abs()).collect()
    }
}

pub fn energy_spectrum(u: &ComplexSeries) -> EnergySpectrum {
    let d = u.dim();
    let n = u.len();
    let blocks = JACKKNIFE_BLOCKS.min(n);
    let mut block_sums = vec![vec![0.0; d]; blocks];
    let mut block_counts = vec![0usize; blocks];
    for (t, row) in u.rows().enumerate() {
        let b = t * blocks / n;
        block_counts[b] += 1;
        for (s, z) in block_sums[b].iter_mut().zip(row) {
            *s += z.norm_sqr();
        }
    }
    let mut mean = vec![0.0; d];
    let mut stderr = vec![0.0; d];
    for k in 0..d {
        let total: f64 = block_sums.iter().map(|b| b[k]).sum();
        mean[k] = total / n as f64;
        if blocks < 2 {
            continue;
        }
        let loo: Vec<f64> = (0..blocks)
            .map(|b| (total - block_sums[b][k]) / (n - block_counts[b]) as f64)
            .collect();
        let avg = loo.iter().sum::<f64>() / blocks as f64;
        let var = loo.iter().map(|v| (v - avg).powi(2)).sum::<f64>() * (blocks - 1) as f64 / blocks as f64;
        stderr[k] = var.sqrt();
    }
    EnergySpectrum { mean, stderr }
}

/// Histogram density of the real part of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    /// Poisson error bars on the density.
    pub stderr: Vec<f64>,
}

impl Histogram {
    pub fn integral(&self) -> f64 {
        self.density.iter().zip(self.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }
}

pub fn marginal_density(u: &ComplexSeries, component: usize, n_bins: usize) -> Result<Histogram> {
    if n_bins < 10 {
        return invalid("a marginal density needs at least 10 bins");
    }
    if component >= u.dim() {
        return invalid(format!("component {component} out of range for dimension {}", u.dim()));
    }
    let vals: Vec<f64> = u.rows().map(|r| r[component].re).collect();
    histogram(&vals, n_bins)
}

/// Density histogram over the data range; a constant sample gets a unit
/// range centered on its value.
pub fn histogram(vals: &[f64], n_bins: usize) -> Result<Histogram> {
    if vals.is_empty() || vals.iter().any(|v| !v.is_finite()) {
        return invalid("histogram data must be non-empty and finite");
    }
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    histogram_range(vals, lo, hi, n_bins)
}

/// Density histogram on fixed bins spanning `[lo, hi]`, so that two samples
/// can be compared bin by bin. Values outside the range count toward the
/// normalization but fall in no bin.
pub fn histogram_range(vals: &[f64], lo: f64, hi: f64, n_bins: usize) -> Result<Histogram> {
    if vals.is_empty() || vals.iter().any(|v| !v.is_finite()) {
        return invalid("histogram data must be non-empty and finite");
    }
    if n_bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return invalid("histogram needs at least one bin and a finite range with hi > lo");
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in vals {
        if v < lo || v > hi {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let n = vals.len() as f64;
    let edges = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
    let density = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    let stderr = counts.iter().map(|&c| (c as f64).sqrt() / (n * width)).collect();
    Ok(Histogram { edges, density, stderr })
}

fn check_pieces(truth: &[ComplexSeries], forecast: &[ComplexSeries]) -> Result<(usize, usize)> {
    if truth.is_empty() || truth.len() != forecast.len() {
        return invalid("truth and forecast piece counts must match and be nonzero");
    }
    let len = truth[0].len();
    let d = truth[0].dim();
    for (t, f) in truth.iter().zip(forecast) {
        if t.len() != len || f.len() != len || t.dim() != d || f.dim() != d {
            return invalid("all pieces must share length and dimension");
        }
    }
    Ok((len, d))
}

/// Forecast skill curves against lead time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseCurves {
    /// Root mean square over pieces of `|Re v - Re u|` (vector norm over components).
    pub real: Vec<f64>,
    /// The same for imaginary parts.
    pub imag: Vec<f64>,
}

pub fn rmse(truth_pieces: &[ComplexSeries], means: &[ComplexSeries]) -> Result<RmseCurves> {
    let (len, _) = check_pieces(truth_pieces, means)?;
    let n0 = truth_pieces.len() as f64;
    let mut real = vec![0.0; len];
    let mut imag = vec![0.0; len];
    for (t, f) in truth_pieces.iter().zip(means) {
        for n in 0..len {
            for (a, b) in t.row(n).iter().zip(f.row(n)) {
                real[n] += (a.re - b.re).powi(2);
                imag[n] += (a.im - b.im).powi(2);
            }
        }
    }
    Ok(RmseCurves {
        real: real.iter().map(|s| (s / n0).sqrt()).collect(),
        imag: imag.iter().map(|s| (s / n0).sqrt()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncrCurve {
    pub values: Vec<f64>,
    /// Pieces skipped per lead because an anomaly vector vanished.
    pub skipped: Vec<usize>,
}

/// Anomaly correlation of the real parts against the climatological mean.
pub fn ancr(truth_pieces: &[ComplexSeries], means: &[ComplexSeries], climatology: &[Complex64]) -> Result<AncrCurve> {
    let (len, d) = check_pieces(truth_pieces, means)?;
    if climatology.len() != d {
        return invalid("climatology must have one value per component");
    }
    let mut values = vec![0.0; len];
    let mut skipped = vec![0; len];
    for n in 0..len {
        let mut acc = 0.0;
        let mut used = 0;
        for (t, f) in truth_pieces.iter().zip(means) {
            let (mut dot, mut nv, mut nu) = (0.0, 0.0, 0.0);
            for ((a, b), c) in t.row(n).iter().zip(f.row(n)).zip(climatology) {
                let av = a.re - c.re;
                let au = b.re - c.re;
                dot += av * au;
                nv += av * av;
                nu += au * au;
            }
            let den = (nv * nu).sqrt();
            if den > 0.0 {
                acc += (dot / den).clamp(-1.0, 1.0);
                used += 1;
            } else {
                skipped[n] += 1;
            }
        }
        values[n] = if used > 0 { acc / used as f64 } else { f64::NAN };
    }
    Ok(AncrCurve { values, skipped })
}

/// Normalized autocorrelation of the real part of a component.
pub fn normalized_acf(u: &ComplexSeries, component: usize, max_lag: usize) -> Result<Vec<f64>> {
    if component >= u.dim() {
        return invalid("component out of range");
    }
    let x: Vec<f64> = u.rows().map(|r| r[component].re).collect();
    let n = x.len();
    if max_lag >= n {
        return invalid("lag exceeds the series length");
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c = |k: usize| (0..n - k).map(|t| (x[t + k] - mean) * (x[t] - mean)).sum::<f64>() / (n - k) as f64;
    let c0 = c(0);
    if c0 == 0.0 {
        return Ok(vec![1.0; max_lag + 1]);
    }
    Ok((0..=max_lag).map(|k| c(k) / c0).collect())
}

/// E-folding lag (in samples) of the component-averaged normalized ACF of
/// the real parts.
pub fn decorrelation_lag(u: &ComplexSeries, max_lag: usize) -> Result<usize> {
    let max_lag = max_lag.min(u.len().saturating_sub(1));
    let acfs: Vec<Vec<f64>> = (0..u.dim()).map(|k| normalized_acf(u, k, max_lag)).collect::<Result<_>>()?;
    let d = u.dim() as f64;
    for lag in 0..=max_lag {
        let avg = acfs.iter().map(|a| a[lag]).sum::<f64>() / d;
        if avg < (-1.0f64).exp() {
            return Ok(lag.max(1));
        }
    }
    Ok(max_lag.max(1))
}

/// A forecast piece: the initial segment and the truth that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub start: usize,
    pub init: ComplexSeries,
    pub truth: ComplexSeries,
}

/// Cuts `count` pieces starting at `first`, `spacing` apart. Each hands
/// `init_len` states to the forecast and keeps `horizon` states of truth.
pub fn extract_pieces(
    x: &ComplexSeries,
    first: usize,
    spacing: usize,
    count: usize,
    init_len: usize,
    horizon: usize,
) -> Result<Vec<Piece>> {
    if spacing == 0 || count == 0 || init_len == 0 || horizon == 0 {
        return invalid("piece layout needs positive spacing, count, init length and horizon");
    }
    let last_end = first + (count - 1) * spacing + init_len + horizon;
    if last_end > x.len() {
        return Err(Error::InsufficientData(format!(
            "{count} pieces need {last_end} states, the series has {}",
            x.len()
        )));
    }
    (0..count)
        .map(|i| {
            let s = first + i * spacing;
            Ok(Piece {
                start: s,
                init: x.slice(s, s + init_len)?,
                truth: x.slice(s + init_len, s + init_len + horizon)?,
            })
        })
        .collect()
}

/// Band-averaged relative defect of the power-spectrum balance
/// `S_xx = H S_uu H^* + H S_u xi + S_xi u H^* + S_xi xi` for a fitted model,
/// where `u` is the stage-one input and `H = 1 / A` on the unit circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub freqs: Vec<f64>,
    /// `|defect|_F / |S_xx|_F` per frequency.
    pub relative: Vec<f64>,
    pub band_averaged: Vec<f64>,
}

pub fn spectral_consistency(
    model: &CascadeModel,
    report: &FitReport,
    data: &FitData,
    welch: &WelchConfig,
    n_bands: usize,
) -> Result<Consistency> {
    let d = model.state_dim;
    let p = model.orders.p();
    let start = report.residual_start;
    let n = report.residuals.len();
    if data.x.len() < start + n {
        return invalid("data is shorter than the residual record");
    }
    // Stage-one input u[t] aligned with x[t+1] and the residual.
    let mut u = Vec::with_capacity(n * d);
    let mut row = vec![Complex64::new(0.0, 0.0); d];
    for k in 0..n {
        let t = start - 1 + k;
        row.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (j, b) in model.weights.iter().enumerate() {
            data.psi.apply_add(t + j - p, b, &mut row);
        }
        if let (Some(fw), Some(fs)) = (&model.forcing, data.forcing) {
            for (i, c) in fw.leads.iter().enumerate() {
                for ((z, ci), wi) in row.iter_mut().zip(c).zip(fs.row(t + i)) {
                    *z += ci * wi;
                }
            }
        }
        u.extend_from_slice(&row);
    }
    let u = ComplexSeries::new(d, data.x.dt(), "input", u)?;
    let x = data.x.slice(start, start + n)?;
    let xi = &report.residuals;
    let sxx = power_spectrum(&x, welch)?;
    let suu = power_spectrum(&u, welch)?;
    let sux = cross_spectrum(&u, xi, welch)?;
    let sxi = power_spectrum(xi, welch)?;
    let a = expand_cascade(&model.cascade);
    let mut relative = Vec::with_capacity(sxx.len());
    for (j, &theta) in sxx.freqs.iter().enumerate() {
        // A(theta) = 1 + sum a_k e^{i (p - k) theta} with `a` constant-first.
        let mut av = Complex64::new(1.0, 0.0);
        for (k, &ak) in a.iter().enumerate() {
            av += ak * Complex64::from_polar(1.0, (p - k) as f64 * theta);
        }
        if av.norm() < 1e-12 {
            return Err(Error::NonFinite(format!("A vanishes on the unit circle at theta = {theta}")));
        }
        let h = Complex64::new(1.0, 0.0) / av;
        let cross = &sux.values[j] * h;
        let model_s = &suu.values[j] * Complex64::new(h.norm_sqr(), 0.0) + &cross + cross.adjoint() + &sxi.values[j];
        let defect: DMatrix<Complex64> = &sxx.values[j] - model_s;
        let scale = sxx.values[j].norm();
        relative.push(if scale > 0.0 { defect.norm() / scale } else { defect.norm() });
    }
    Ok(Consistency { band_averaged: band_average(&relative, n_bands), freqs: sxx.freqs, relative })
}

/// Angular frequency of grid index `j` on an `m`-point grid.
pub fn grid_frequency(j: usize, m: usize) -> f64 {
    2.0 * PI * j as f64 / m as f64
}
