//! Correlation functions and Welch power spectra of vector series.
//!
//! Conventions: `C_uv(k) = E[(u_{n+k} - mean)(v_n - mean)^*]` and
//! `S_uv(theta) = sum_k C_uv(k) e^{i k theta}`, so a filter
//! `y_n = sum_k h_k x_{n-k}` acts as `S_yy = H S_xx H^*` with
//! `H(theta) = sum_k h_k e^{i k theta}`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::series::ComplexSeries;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative threshold below which eigenvalues are clipped to zero before
/// taking a spectral square root.
pub const EIGEN_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    pub fn name(&self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        }
    }

    fn weights(&self, len: usize) -> Vec<f64> {
        match self {
            // Periodic Hann keeps 50% overlapped windows summing to a constant.
            Window::Hann => (0..len).map(|t| 0.5 - 0.5 * (2.0 * PI * t as f64 / len as f64).cos()).collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }
}

/// Welch estimator settings. With `segment_len` unset the length follows
/// from the requested number of segments and the overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segments: usize,
    pub segment_len: Option<usize>,
    pub overlap: f64,
    pub window: Window,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self { segments: 64, segment_len: None, overlap: 0.5, window: Window::Hann }
    }
}

impl WelchConfig {
    pub fn with_segment_len(len: usize) -> Self {
        Self { segment_len: Some(len), ..Self::default() }
    }

    /// Segment length and hop for a series of `n` samples.
    pub fn layout(&self, n: usize) -> Result<(usize, usize)> {
        if !(0.0..1.0).contains(&self.overlap) {
            return invalid(format!("overlap must lie in [0, 1), got {}", self.overlap));
        }
        let len = match self.segment_len {
            Some(l) => l,
            None => {
                if self.segments == 0 {
                    return invalid("segment count must be positive");
                }
                let denom = 1.0 + (self.segments as f64 - 1.0) * (1.0 - self.overlap);
                (n as f64 / denom).floor() as usize
            }
        };
        if len < 8 {
            return invalid(format!("segment length {len} is below the minimum of 8"));
        }
        if n < len {
            return invalid(format!("series of length {n} is shorter than one segment of {len}"));
        }
        let hop = (((1.0 - self.overlap) * len as f64).round() as usize).max(1);
        Ok((len, hop))
    }
}

/// Matrix-valued spectrum on the grid `theta_j = 2 pi j / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub freqs: Vec<f64>,
    pub values: Vec<DMatrix<Complex64>>,
    pub segment_len: usize,
    pub segments_used: usize,
    pub overlap: f64,
    pub window: Window,
}

impl SpectrumEstimate {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Real trace per frequency.
    pub fn trace(&self) -> Vec<f64> {
        self.values.iter().map(|m| m.trace().re).collect()
    }
}

fn demeaned_components(u: &ComplexSeries) -> Vec<Vec<Complex64>> {
    let mean = u.mean();
    (0..u.dim())
        .map(|i| u.rows().map(|r| r[i] - mean[i]).collect())
        .collect()
}

/// `C(k)` for `k = 0..=max_lag` with the mean removed and the unbiased
/// `1 / (N - k)` normalization.
pub fn acf(u: &ComplexSeries, max_lag: usize) -> Result<Vec<DMatrix<Complex64>>> {
    if max_lag >= u.len() {
        return invalid(format!("max_lag {max_lag} must be below the series length {}", u.len()));
    }
    let two_sided = correlate(u, u, max_lag)?;
    Ok(two_sided[max_lag..].to_vec())
}

/// Two-sided cross-covariance `C_uv(k)` for `k = -max_lag..=max_lag`
/// (index 0 is lag `-max_lag`).
pub fn ccf(u: &ComplexSeries, v: &ComplexSeries, max_lag: usize) -> Result<Vec<DMatrix<Complex64>>> {
    if u.len() != v.len() {
        return invalid(format!("series lengths differ: {} vs {}", u.len(), v.len()));
    }
    if (u.dt() - v.dt()).abs() > 1e-12 * u.dt() {
        return invalid("series sampling intervals differ");
    }
    if max_lag >= u.len() {
        return invalid(format!("max_lag {max_lag} must be below the series length {}", u.len()));
    }
    correlate(u, v, max_lag)
}

fn correlate(u: &ComplexSeries, v: &ComplexSeries, max_lag: usize) -> Result<Vec<DMatrix<Complex64>>> {
    let n = u.len();
    let m = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let transform = |c: Vec<Complex64>| {
        let mut buf = c;
        buf.resize(m, ZERO);
        fwd.process(&mut buf);
        buf
    };
    let us: Vec<Vec<Complex64>> = demeaned_components(u).into_iter().map(transform).collect();
    let vs: Vec<Vec<Complex64>> = demeaned_components(v).into_iter().map(transform).collect();
    let mut out = vec![DMatrix::zeros(u.dim(), v.dim()); 2 * max_lag + 1];
    for (a, ua) in us.iter().enumerate() {
        for (b, vb) in vs.iter().enumerate() {
            let mut prod: Vec<Complex64> = ua.iter().zip(vb).map(|(x, y)| x * y.conj()).collect();
            inv.process(&mut prod);
            for lag in -(max_lag as i64)..=(max_lag as i64) {
                let idx = if lag >= 0 { lag as usize } else { m - (-lag) as usize };
                let count = (n - lag.unsigned_abs() as usize) as f64;
                out[(lag + max_lag as i64) as usize][(a, b)] = prod[idx] / (m as f64 * count);
            }
        }
    }
    Ok(out)
}

/// Welch cross-spectrum `S_uv` of two equally long series.
pub fn cross_spectrum(u: &ComplexSeries, v: &ComplexSeries, cfg: &WelchConfig) -> Result<SpectrumEstimate> {
    if u.len() != v.len() {
        return invalid(format!("series lengths differ: {} vs {}", u.len(), v.len()));
    }
    let n = u.len();
    let (len, hop) = cfg.layout(n)?;
    let w = cfg.window.weights(len);
    let norm: f64 = w.iter().map(|x| x * x).sum();
    let fft = FftPlanner::new().plan_fft_inverse(len);
    let uc = demeaned_components(u);
    let vc = demeaned_components(v);
    let same = std::ptr::eq(u, v);
    let (du, dv) = (u.dim(), v.dim());
    let mut acc = vec![DMatrix::<Complex64>::zeros(du, dv); len];
    let mut segs = 0;
    let mut start = 0;
    while start + len <= n {
        let tx = |c: &Vec<Complex64>| {
            let mut buf: Vec<Complex64> = (0..len).map(|t| c[start + t] * w[t]).collect();
            fft.process(&mut buf);
            buf
        };
        let xu: Vec<Vec<Complex64>> = uc.iter().map(tx).collect();
        let xv: Vec<Vec<Complex64>> = if same { xu.clone() } else { vc.iter().map(tx).collect() };
        for (j, m) in acc.iter_mut().enumerate() {
            for a in 0..du {
                for b in 0..dv {
                    m[(a, b)] += xu[a][j] * xv[b][j].conj();
                }
            }
        }
        segs += 1;
        start += hop;
    }
    let scale = 1.0 / (segs as f64 * norm);
    for m in acc.iter_mut() {
        *m *= Complex64::new(scale, 0.0);
    }
    Ok(SpectrumEstimate {
        freqs: (0..len).map(|j| 2.0 * PI * j as f64 / len as f64).collect(),
        values: acc,
        segment_len: len,
        segments_used: segs,
        overlap: cfg.overlap,
        window: cfg.window,
    })
}

/// Welch power spectrum of the mean-removed series.
pub fn power_spectrum(u: &ComplexSeries, cfg: &WelchConfig) -> Result<SpectrumEstimate> {
    cross_spectrum(u, u, cfg)
}

/// Hermitian positive semidefinite square root `f` with `f f^* = S`, after
/// symmetrizing and clipping eigenvalues below `EIGEN_CLIP * max`.
pub fn hermitian_sqrt(s: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("spectral matrix has non-finite entries".into()));
    }
    let d = s.nrows();
    if d == 1 {
        return Ok(DMatrix::from_element(1, 1, Complex64::new(s[(0, 0)].re.max(0.0).sqrt(), 0.0)));
    }
    let herm = (s + s.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
    let cut = EIGEN_CLIP * top;
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|&l| if l > cut { l.sqrt() } else { 0.0 }).collect();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*r);
    }
    Ok(scaled * v.adjoint())
}

/// Spectral factor per frequency.
pub fn spectral_factor(s: &SpectrumEstimate) -> Result<Vec<DMatrix<Complex64>>> {
    s.values.iter().map(hermitian_sqrt).collect()
}

/// Averages of `values` over `n_bands` contiguous equal frequency bands.
pub fn band_average(values: &[f64], n_bands: usize) -> Vec<f64> {
    let n = values.len();
    (0..n_bands)
        .map(|b| {
            let lo = b * n / n_bands;
            let hi = ((b + 1) * n / n_bands).max(lo + 1).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_zero_acf() {
        let s = ComplexSeries::new(1, 1.0, "", vec![Complex64::new(2.0, -1.0); 50]).unwrap();
        for m in acf(&s, 10).unwrap() {
            assert!(m[(0, 0)].norm() < 1e-14);
        }
        assert!(acf(&s, 50).is_err());
    }

    #[test]
    fn ccf_of_shifted_copy_peaks_at_shift() {
        let n = 400;
        let x: Vec<Complex64> = (0..n + 3).map(|t| Complex64::new(((t * 37 % 17) as f64 - 8.0) / 3.0, 0.0)).collect();
        let u = ComplexSeries::new(1, 1.0, "", x[3..].to_vec()).unwrap();
        let v = ComplexSeries::new(1, 1.0, "", x[..n].to_vec()).unwrap();
        // v_n = x_n, u_n = x_{n+3}: v is u delayed by 3, so C_vu peaks at lag 3.
        let c = ccf(&v, &u, 6).unwrap();
        let best = (0..13).max_by(|&a, &b| c[a][(0, 0)].norm().total_cmp(&c[b][(0, 0)].norm())).unwrap();
        assert_eq!(best as i64 - 6, 3);
        let c0 = ccf(&u, &u, 2).unwrap()[2][(0, 0)];
        let a0 = acf(&u, 2).unwrap()[0][(0, 0)];
        assert!((c0 - a0).norm() < 1e-12);
    }

    #[test]
    fn sqrt_of_scalar_and_identity() {
        let f = hermitian_sqrt(&DMatrix::from_element(1, 1, Complex64::new(4.0, 0.0))).unwrap();
        assert!((f[(0, 0)].re - 2.0).abs() < 1e-15);
        let id = DMatrix::<Complex64>::identity(3, 3);
        let f = hermitian_sqrt(&id).unwrap();
        assert!((&f * f.adjoint() - id).norm() < 1e-12);
        let mut bad = DMatrix::<Complex64>::identity(2, 2);
        bad[(0, 1)] = Complex64::new(f64::NAN, 0.0);
        assert!(hermitian_sqrt(&bad).is_err());
    }

    #[test]
    fn sinusoid_peak_at_nearest_frequency() {
        let n = 4096;
        let theta0 = 2.0 * PI * 0.1234;
        let x: Vec<Complex64> = (0..n).map(|t| Complex64::from_polar(1.0, -theta0 * t as f64)).collect();
        let s = power_spectrum(&ComplexSeries::new(1, 1.0, "", x).unwrap(), &WelchConfig::with_segment_len(256)).unwrap();
        let tr = s.trace();
        let best = (0..tr.len()).max_by(|&a, &b| tr[a].total_cmp(&tr[b])).unwrap();
        // With S defined through e^{+i k theta}, e^{-i theta0 t} has its peak at theta0.
        let want = (theta0 / (2.0 * PI) * 256.0).round() as usize;
        assert_eq!(best, want);
    }

    #[test]
    fn layout_errors() {
        let cfg = WelchConfig::with_segment_len(4);
        assert!(cfg.layout(100).is_err());
        let cfg = WelchConfig::with_segment_len(64);
        assert!(cfg.layout(32).is_err());
    }
}
