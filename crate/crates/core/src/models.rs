//! Full-model data generators: Kuramoto–Sivashinsky and stochastically
//! forced Burgers in Fourier space, integrated with ETDRK4.
//!
//! A real field `U(x) = sum_k u_k e^{i lambda_k x}` is represented by its
//! positive modes `u_1..u_n`; `u_0 = 0` and `u_{-k} = conj(u_k)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::series::ComplexSeries;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Mode counts at or below this use the direct convolution sum.
const DIRECT_CONVOLUTION_MAX: usize = 24;

/// Number of contour points for the phi-function evaluation.
const CONTOUR_POINTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdeKind {
    Ks,
    Burgers,
}

/// Parameters of a full-model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralPdeConfig {
    pub kind: PdeKind,
    /// Domain length; wavenumbers are `2 pi k / length`.
    pub length: f64,
    pub n_modes: usize,
    /// Viscosity (Burgers only).
    pub nu: f64,
    pub dt: f64,
    pub stride: usize,
    /// Integrator steps discarded before recording.
    pub burn_in: usize,
    /// Integrator steps recorded after burn-in.
    pub steps: usize,
    /// Number of low modes written to the observed series.
    pub observed: usize,
    /// Forcing amplitude per mode `k = 1..`; missing entries are zero.
    pub sigma: Vec<f64>,
    pub seed: u64,
    /// Record the aggregated forcing (Burgers).
    pub record_forcing: bool,
    /// Scale of the random smooth initial condition.
    pub ic_amplitude: f64,
}

impl SpectralPdeConfig {
    /// Kuramoto–Sivashinsky on a domain with three linearly unstable modes.
    pub fn ks_default() -> Self {
        Self {
            kind: PdeKind::Ks,
            length: 21.55,
            n_modes: 108,
            nu: 0.0,
            dt: 1e-3,
            stride: 100,
            burn_in: 100_000,
            steps: 2_000_000,
            observed: 5,
            sigma: Vec::new(),
            seed: 1,
            record_forcing: false,
            ic_amplitude: 0.1,
        }
    }

    /// Stochastic Burgers on `[0, 2 pi)` forced in modes 1..4.
    pub fn burgers_default() -> Self {
        Self {
            kind: PdeKind::Burgers,
            length: 2.0 * PI,
            n_modes: 128,
            nu: 0.05,
            dt: 0.00125,
            stride: 8,
            burn_in: 80_000,
            steps: 2_000_000,
            observed: 9,
            sigma: vec![1.0; 4],
            seed: 1,
            record_forcing: true,
            ic_amplitude: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if self.stride == 0 {
            return invalid("stride must be at least 1");
        }
        if self.n_modes == 0 {
            return invalid("n_modes must be at least 1");
        }
        if !(self.length > 0.0) {
            return invalid("domain length must be positive");
        }
        if self.kind == PdeKind::Burgers && !(self.nu > 0.0) {
            return invalid("Burgers viscosity nu must be positive");
        }
        if self.observed == 0 || self.observed > self.n_modes {
            return invalid(format!(
                "observed modes must lie in 1..={}, got {}",
                self.n_modes, self.observed
            ));
        }
        if self.sigma.len() > self.n_modes || self.sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return invalid("sigma must hold at most n_modes finite nonnegative amplitudes");
        }
        if self.record_forcing && self.kind != PdeKind::Burgers {
            return invalid("forcing can only be recorded for Burgers runs");
        }
        Ok(())
    }

    /// Observation interval `stride * dt`.
    pub fn delta(&self) -> f64 {
        self.stride as f64 * self.dt
    }

    /// Per-mode forcing amplitude (zero beyond `sigma`).
    pub fn sigma_k(&self, k: usize) -> f64 {
        self.sigma.get(k - 1).copied().unwrap_or(0.0)
    }
}

/// Wavenumbers `lambda_k = 2 pi k / length`, `k = 1..=n`.
pub fn wavenumbers(length: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| 2.0 * PI * k as f64 / length).collect()
}

/// Diagonal linear symbol of the PDE.
pub fn linear_symbol(kind: PdeKind, length: f64, nu: f64, n: usize) -> Vec<f64> {
    wavenumbers(length, n)
        .into_iter()
        .map(|l| match kind {
            PdeKind::Ks => l * l - l.powi(4),
            PdeKind::Burgers => -nu * l * l,
        })
        .collect()
}

/// Truncated quadratic convolution `(U^2)_k = sum_l u_l u_{k-l}` for `k = 1..=n`,
/// with all factors restricted to `|l|, |k-l| <= n`.
#[derive(Clone)]
pub enum Convolver {
    Direct { n: usize },
    Fft { n: usize, size: usize, forward: Arc<dyn Fft<f64>>, inverse: Arc<dyn Fft<f64>> },
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Convolver::Direct { n } => write!(f, "Convolver::Direct(n={n})"),
            Convolver::Fft { n, size, .. } => write!(f, "Convolver::Fft(n={n}, size={size})"),
        }
    }
}

/// Scratch buffers for [`Convolver::apply`].
#[derive(Debug, Clone, Default)]
pub struct ConvScratch {
    grid: Vec<Complex64>,
    fft: Vec<Complex64>,
}

impl Convolver {
    pub fn new(n: usize) -> Self {
        if n <= DIRECT_CONVOLUTION_MAX {
            return Convolver::Direct { n };
        }
        Self::new_fft(n)
    }

    /// FFT-based convolution on a grid of at least `3n + 1` points, which
    /// removes aliasing of the quadratic term (the 3/2 rule).
    pub fn new_fft(n: usize) -> Self {
        let size = (3 * n + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Convolver::Fft {
            n,
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Convolver::Direct { n } | Convolver::Fft { n, .. } => *n,
        }
    }

    pub fn scratch(&self) -> ConvScratch {
        match self {
            Convolver::Direct { .. } => ConvScratch::default(),
            Convolver::Fft { size, forward, inverse, .. } => ConvScratch {
                grid: vec![ZERO; *size],
                fft: vec![ZERO; forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())],
            },
        }
    }

    pub fn apply(&self, u: &[Complex64], out: &mut [Complex64], s: &mut ConvScratch) {
        match self {
            Convolver::Direct { n } => direct_square(u, *n, out),
            Convolver::Fft { n, size, forward, inverse } => {
                let (n, m) = (*n, *size);
                let g = &mut s.grid;
                g.iter_mut().for_each(|z| *z = ZERO);
                for k in 1..=n {
                    g[k] = u[k - 1];
                    g[m - k] = u[k - 1].conj();
                }
                inverse.process_with_scratch(g, &mut s.fft);
                for z in g.iter_mut() {
                    // The field is real; squaring the real part drops round-off.
                    *z = Complex64::new(z.re * z.re, 0.0);
                }
                forward.process_with_scratch(g, &mut s.fft);
                let inv = 1.0 / m as f64;
                for k in 1..=n {
                    out[k - 1] = g[k] * inv;
                }
            }
        }
    }
}

fn mode(u: &[Complex64], l: i64) -> Complex64 {
    match l {
        0 => ZERO,
        l if l > 0 => u[l as usize - 1],
        l => u[(-l) as usize - 1].conj(),
    }
}

fn direct_square(u: &[Complex64], n: usize, out: &mut [Complex64]) {
    let n = n as i64;
    for k in 1..=n {
        let mut acc = ZERO;
        for l in (k - n)..=n {
            acc += mode(u, l) * mode(u, k - l);
        }
        out[k as usize - 1] = acc;
    }
}

/// Brute-force truncated convolution over all index pairs; a reference for tests.
pub fn convolution_reference(u: &[Complex64]) -> Vec<Complex64> {
    let n = u.len() as i64;
    (1..=n)
        .map(|k| {
            let mut acc = ZERO;
            for l in -n..=n {
                let m = k - l;
                if m.abs() <= n {
                    acc += mode(u, l) * mode(u, m);
                }
            }
            acc
        })
        .collect()
}

/// Semilinear spectral system `du_k/dt = L_k u_k + g_k (U^2)_k` with
/// `g_k = -i lambda_k / 2`, advanced by fourth-order exponential time
/// differencing (Cox–Matthews with contour-integral coefficients).
#[derive(Debug, Clone)]
pub struct Etdrk4 {
    h: f64,
    linear: Vec<f64>,
    nonlinear_gain: Vec<Complex64>,
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
    conv: Convolver,
}

/// Scratch state for [`Etdrk4::step`].
#[derive(Debug, Clone)]
pub struct Etdrk4Workspace {
    nu: Vec<Complex64>,
    a: Vec<Complex64>,
    na: Vec<Complex64>,
    b: Vec<Complex64>,
    nb: Vec<Complex64>,
    c: Vec<Complex64>,
    nc: Vec<Complex64>,
    conv: ConvScratch,
}

impl Etdrk4 {
    pub fn new(kind: PdeKind, length: f64, nu: f64, n: usize, h: f64) -> Self {
        Self::with_convolver(kind, length, nu, h, Convolver::new(n))
    }

    pub fn with_convolver(kind: PdeKind, length: f64, nu: f64, h: f64, conv: Convolver) -> Self {
        let n = conv.n();
        let linear = linear_symbol(kind, length, nu, n);
        let nonlinear_gain = wavenumbers(length, n)
            .into_iter()
            .map(|l| Complex64::new(0.0, -l / 2.0))
            .collect();
        Self::from_symbols(linear, nonlinear_gain, h, conv)
    }

    fn from_symbols(linear: Vec<f64>, nonlinear_gain: Vec<Complex64>, h: f64, conv: Convolver) -> Self {
        let roots: Vec<Complex64> = (1..=CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, PI * (j as f64 - 0.5) / CONTOUR_POINTS as f64))
            .collect();
        let mean = |z: f64, f: &dyn Fn(Complex64) -> Complex64| -> f64 {
            roots.iter().map(|&r| f(z + r)).sum::<Complex64>().re / CONTOUR_POINTS as f64
        };
        let (mut e, mut e2, mut q, mut f1, mut f2, mut f3) = (vec![], vec![], vec![], vec![], vec![], vec![]);
        for &lk in &linear {
            let z = lk * h;
            e.push(z.exp());
            e2.push((z / 2.0).exp());
            q.push(h * mean(z, &|r| ((r / 2.0).exp() - 1.0) / r));
            f1.push(h * mean(z, &|r| (-4.0 - r + r.exp() * (4.0 - 3.0 * r + r * r)) / (r * r * r)));
            f2.push(h * mean(z, &|r| (2.0 + r + r.exp() * (r - 2.0)) / (r * r * r)));
            f3.push(h * mean(z, &|r| (-4.0 - 3.0 * r - r * r + r.exp() * (4.0 - r)) / (r * r * r)));
        }
        Self { h, linear, nonlinear_gain, e, e2, q, f1, f2, f3, conv }
    }

    /// A copy with the nonlinear term switched off.
    pub fn linear_only(&self) -> Self {
        let mut s = self.clone();
        s.nonlinear_gain.iter_mut().for_each(|g| *g = ZERO);
        s
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn dt(&self) -> f64 {
        self.h
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn workspace(&self) -> Etdrk4Workspace {
        let z = vec![ZERO; self.n()];
        Etdrk4Workspace {
            nu: z.clone(),
            a: z.clone(),
            na: z.clone(),
            b: z.clone(),
            nb: z.clone(),
            c: z.clone(),
            nc: z,
            conv: self.conv.scratch(),
        }
    }

    /// Nonlinear tendency `g_k (U^2)_k`.
    pub fn nonlinear(&self, u: &[Complex64], out: &mut [Complex64], s: &mut ConvScratch) {
        if self.nonlinear_gain.iter().all(|g| *g == ZERO) {
            out.iter_mut().for_each(|z| *z = ZERO);
            return;
        }
        self.conv.apply(u, out, s);
        for (o, g) in out.iter_mut().zip(&self.nonlinear_gain) {
            *o *= g;
        }
    }

    /// Full tendency `L u + N(u)`.
    pub fn rhs(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.n()];
        let mut s = self.conv.scratch();
        self.nonlinear(u, &mut out, &mut s);
        for ((o, l), x) in out.iter_mut().zip(&self.linear).zip(u) {
            *o += x * l;
        }
        out
    }

    /// Advances `u` by one step in place.
    pub fn step(&self, u: &mut [Complex64], w: &mut Etdrk4Workspace) {
        let n = self.n();
        self.nonlinear(u, &mut w.nu, &mut w.conv);
        for k in 0..n {
            w.a[k] = u[k] * self.e2[k] + w.nu[k] * self.q[k];
        }
        self.nonlinear(&w.a, &mut w.na, &mut w.conv);
        for k in 0..n {
            w.b[k] = u[k] * self.e2[k] + w.na[k] * self.q[k];
        }
        self.nonlinear(&w.b, &mut w.nb, &mut w.conv);
        for k in 0..n {
            w.c[k] = w.a[k] * self.e2[k] + (w.nb[k] * 2.0 - w.nu[k]) * self.q[k];
        }
        self.nonlinear(&w.c, &mut w.nc, &mut w.conv);
        for k in 0..n {
            u[k] = u[k] * self.e[k]
                + w.nu[k] * self.f1[k]
                + (w.na[k] + w.nb[k]) * (2.0 * self.f2[k])
                + w.nc[k] * self.f3[k];
        }
    }
}

/// Time stepper for a full-model configuration, including the additive
/// stochastic forcing `sqrt(dt) sigma_k w_k` with `E|w_k|^2 = 1`.
#[derive(Debug, Clone)]
pub struct SpectralIntegrator {
    etd: Etdrk4,
    sigma: Vec<f64>,
    forced: Vec<usize>,
}

impl SpectralIntegrator {
    pub fn new(cfg: &SpectralPdeConfig) -> Result<Self> {
        cfg.validate()?;
        let etd = Etdrk4::new(cfg.kind, cfg.length, cfg.nu, cfg.n_modes, cfg.dt);
        let sigma: Vec<f64> = (1..=cfg.n_modes).map(|k| cfg.sigma_k(k)).collect();
        let forced = (0..cfg.n_modes).filter(|&k| sigma[k] != 0.0).collect();
        Ok(Self { etd, sigma, forced })
    }

    pub fn etdrk4(&self) -> &Etdrk4 {
        &self.etd
    }

    /// Indices (0-based) of the modes that receive forcing, in draw order.
    pub fn forced_modes(&self) -> &[usize] {
        &self.forced
    }

    pub fn workspace(&self) -> Etdrk4Workspace {
        self.etd.workspace()
    }

    /// Deterministic substep followed by the forcing increment built from the
    /// given draws (one per forced mode, in [`Self::forced_modes`] order).
    pub fn step_with_forcing(&self, u: &mut [Complex64], w: &[Complex64], ws: &mut Etdrk4Workspace) {
        self.etd.step(u, ws);
        let s = self.etd.dt().sqrt();
        for (&k, &wk) in self.forced.iter().zip(w) {
            u[k] += wk * (s * self.sigma[k]);
        }
    }

    /// One stochastic step; returns the complex standard normal draws used.
    pub fn stochastic_step<R: Rng + ?Sized>(
        &self,
        u: &mut [Complex64],
        rng: &mut R,
        ws: &mut Etdrk4Workspace,
    ) -> Vec<Complex64> {
        let w: Vec<Complex64> = self.forced.iter().map(|_| complex_normal(rng)).collect();
        self.step_with_forcing(u, &w, ws);
        w
    }
}

/// Complex standard normal: real and imaginary parts independent with variance 1/2.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// Stream ids used to split a run seed.
const STREAM_IC: u64 = 0;
const STREAM_FORCING: u64 = 1;

/// RNG for component `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random smooth initial condition with coefficient variance decaying as `k^-4`.
pub fn random_initial_condition(cfg: &SpectralPdeConfig) -> Vec<Complex64> {
    let mut rng = stream_rng(cfg.seed, STREAM_IC);
    (1..=cfg.n_modes)
        .map(|k| complex_normal(&mut rng) * (cfg.ic_amplitude / (k * k) as f64))
        .collect()
}

/// Output of a full-model run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub observed: ComplexSeries,
    /// Aggregated forcing `(w_{sn} + ... + w_{sn+s-1}) / sqrt(s)` on the
    /// observed modes, aligned with the observation index.
    pub forcing_agg: Option<ComplexSeries>,
    /// Raw per-step forcing of the observed modes for the first recorded
    /// steps, when requested.
    pub forcing_tape: Option<ComplexSeries>,
    pub config: SpectralPdeConfig,
}

/// Integrates from a random smooth initial condition, discards `burn_in`
/// steps and records the observed modes every `stride` steps.
pub fn generate_trajectory(cfg: &SpectralPdeConfig) -> Result<TrajectoryRecord> {
    generate_trajectory_with_tape(cfg, 0)
}

/// As [`generate_trajectory`], also keeping the raw forcing draws of the
/// observed modes for the first `tape_steps` recorded steps.
pub fn generate_trajectory_with_tape(cfg: &SpectralPdeConfig, tape_steps: usize) -> Result<TrajectoryRecord> {
    let integ = SpectralIntegrator::new(cfg)?;
    let u0 = random_initial_condition(cfg);
    run_from(cfg, &integ, u0, tape_steps)
}

/// Runs a configuration from an explicit initial state (length `n_modes`).
pub fn generate_trajectory_from(
    cfg: &SpectralPdeConfig,
    initial: Vec<Complex64>,
    tape_steps: usize,
) -> Result<TrajectoryRecord> {
    let integ = SpectralIntegrator::new(cfg)?;
    if initial.len() != cfg.n_modes {
        return invalid(format!("initial state has {} modes, expected {}", initial.len(), cfg.n_modes));
    }
    run_from(cfg, &integ, initial, tape_steps)
}

fn run_from(
    cfg: &SpectralPdeConfig,
    integ: &SpectralIntegrator,
    mut u: Vec<Complex64>,
    tape_steps: usize,
) -> Result<TrajectoryRecord> {
    if cfg.steps == 0 {
        return invalid("number of recorded steps must be positive");
    }
    let k = cfg.observed;
    let stride = cfg.stride;
    let n_obs = cfg.steps.div_ceil(stride);
    let mut rng = stream_rng(cfg.seed, STREAM_FORCING);
    let mut ws = integ.workspace();
    let stochastic = !integ.forced.is_empty();
    let check = |u: &[Complex64], step: usize| -> Result<()> {
        if u.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::BlowUp { step, detail: "non-finite Fourier coefficient".into() })
        }
    };
    let mut advance = |u: &mut [Complex64], rng: &mut ChaCha8Rng| -> Vec<Complex64> {
        if stochastic {
            integ.stochastic_step(u, rng, &mut ws)
        } else {
            integ.etd.step(u, &mut ws);
            Vec::new()
        }
    };
    for step in 0..cfg.burn_in {
        advance(&mut u, &mut rng);
        if step % 1000 == 999 {
            check(&u, step + 1)?;
        }
    }
    check(&u, cfg.burn_in)?;

    let mut observed = Vec::with_capacity(n_obs * k);
    let record_forcing = cfg.record_forcing;
    let mut agg = Vec::with_capacity(if record_forcing { n_obs * k } else { 0 });
    let mut tape = Vec::new();
    let tape_steps = tape_steps.min(cfg.steps);
    let forced = integ.forced_modes().to_vec();
    let inv_sqrt = 1.0 / (stride as f64).sqrt();
    let mut acc = vec![ZERO; k];
    for step in 0..cfg.steps {
        if step % stride == 0 {
            check(&u, cfg.burn_in + step)?;
            observed.extend_from_slice(&u[..k]);
        }
        let w = advance(&mut u, &mut rng);
        let mut row = vec![ZERO; k];
        for (&m, &wm) in forced.iter().zip(&w) {
            if m < k {
                row[m] = wm;
            }
        }
        if record_forcing {
            for (a, r) in acc.iter_mut().zip(&row) {
                *a += r;
            }
            if step % stride == stride - 1 || step + 1 == cfg.steps {
                agg.extend(acc.iter().map(|z| z * inv_sqrt));
                acc.iter_mut().for_each(|z| *z = ZERO);
            }
        }
        if step < tape_steps {
            tape.extend_from_slice(&row);
        }
    }
    check(&u, cfg.burn_in + cfg.steps)?;
    let delta = cfg.delta();
    let label = match cfg.kind {
        PdeKind::Ks => "ks",
        PdeKind::Burgers => "burgers",
    };
    Ok(TrajectoryRecord {
        observed: ComplexSeries::new(k, delta, label, observed)?,
        forcing_agg: if record_forcing { Some(ComplexSeries::new(k, delta, "forcing", agg)?) } else { None },
        forcing_tape: if tape_steps > 0 { Some(ComplexSeries::new(k, cfg.dt, "forcing-tape", tape)?) } else { None },
        config: cfg.clone(),
    })
}

/// Physical-space samples of the real field on `size` grid points.
pub fn to_physical(u: &[Complex64], size: usize) -> Vec<Complex64> {
    let mut g = vec![ZERO; size];
    for (k, &z) in u.iter().enumerate().take(size / 2 - 1) {
        g[k + 1] = z;
        g[size - k - 1] = z.conj();
    }
    FftPlanner::new().plan_fft_inverse(size).process(&mut g);
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| complex_normal(&mut rng)).collect()
    }

    #[test]
    fn convolvers_match_reference() {
        for n in [1, 3, 9, 24, 25, 40, 108, 128] {
            let u = random_state(n, n as u64);
            let want = convolution_reference(&u);
            let mut got = vec![ZERO; n];
            let conv = Convolver::new(n);
            conv.apply(&u, &mut got, &mut conv.scratch());
            let fft = Convolver::new_fft(n);
            let mut got_fft = vec![ZERO; n];
            fft.apply(&u, &mut got_fft, &mut fft.scratch());
            for k in 0..n {
                assert!((got[k] - want[k]).norm() < 1e-10 * (1.0 + want[k].norm()), "n={n} k={k}");
                assert!((got_fft[k] - want[k]).norm() < 1e-10 * (1.0 + want[k].norm()), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn ks_rhs_zero_and_single_mode() {
        let etd = Etdrk4::new(PdeKind::Ks, 21.55, 0.0, 108, 1e-3);
        assert!(etd.rhs(&vec![ZERO; 108]).iter().all(|z| *z == ZERO));
        let eps = 1e-3;
        let mut u = vec![ZERO; 108];
        u[0] = c(eps, 0.0);
        let out = etd.rhs(&u);
        let lam = wavenumbers(21.55, 2);
        let lin1 = (lam[0].powi(2) - lam[0].powi(4)) * eps;
        assert!((out[0] - c(lin1, 0.0)).norm() < 1e-15);
        let quad2 = c(0.0, -lam[1] / 2.0) * eps * eps;
        assert!((out[1] - quad2).norm() < 1e-18);
        assert!(out[2..].iter().all(|z| z.norm() < 1e-18));
    }

    #[test]
    fn burgers_rhs_single_and_two_modes() {
        let nu = 0.05;
        let etd = Etdrk4::new(PdeKind::Burgers, 2.0 * PI, nu, 16, 1e-3);
        let mut u = vec![ZERO; 16];
        u[3] = c(0.3, -0.2);
        let out = etd.rhs(&u);
        // The linear part decays at rate nu k^2 in mode 4.
        assert!((out[3] - u[3] * (-nu * 16.0)).norm() < 1e-14);
        let mut u = vec![ZERO; 16];
        u[0] = c(0.5, 0.1);
        u[2] = c(-0.2, 0.4);
        let out = etd.rhs(&u);
        let conv = convolution_reference(&u);
        for k in 0..16 {
            let lam = (k + 1) as f64;
            let want = conv[k] * c(0.0, -lam / 2.0) - u[k] * (nu * lam * lam);
            assert!((out[k] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn linear_propagation_is_exact() {
        let etd = Etdrk4::new(PdeKind::Ks, 21.55, 0.0, 20, 0.01).linear_only();
        let u0 = random_state(20, 7);
        let mut u = u0.clone();
        let mut ws = etd.workspace();
        for _ in 0..10 {
            etd.step(&mut u, &mut ws);
        }
        for (k, l) in etd.linear().iter().enumerate() {
            let want = u0[k] * (l * 0.1).exp();
            assert!((u[k] - want).norm() <= 1e-12 * want.norm().max(1.0), "mode {k}");
        }
    }

    #[test]
    fn fields_stay_real() {
        let u = random_state(30, 3);
        let g = to_physical(&u, 128);
        assert!(g.iter().all(|z| z.im.abs() < 1e-10));
    }

    #[test]
    fn zero_sigma_matches_deterministic_step() {
        let mut cfg = SpectralPdeConfig::burgers_default();
        cfg.n_modes = 32;
        cfg.observed = 4;
        cfg.sigma = vec![];
        let integ = SpectralIntegrator::new(&cfg).unwrap();
        let mut ws = integ.workspace();
        let mut a = random_state(32, 1);
        let mut b = a.clone();
        let w = integ.stochastic_step(&mut a, &mut ChaCha8Rng::seed_from_u64(0), &mut ws);
        assert!(w.is_empty());
        integ.etdrk4().step(&mut b, &mut ws);
        assert_eq!(a, b);
    }

    #[test]
    fn observation_interval() {
        let ks = SpectralPdeConfig::ks_default();
        assert!((ks.delta() - 0.1).abs() < 1e-15);
        let b = SpectralPdeConfig::burgers_default();
        assert!((b.delta() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SpectralPdeConfig::ks_default();
        cfg.stride = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SpectralPdeConfig::burgers_default();
        cfg.nu = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SpectralPdeConfig::ks_default();
        cfg.steps = 0;
        assert!(generate_trajectory(&cfg).is_err());
    }
}
