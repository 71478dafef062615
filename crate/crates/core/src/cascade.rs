//! The cascade filter engine: second-order sections in series, run on
//! vector (or matrix) inputs with shared real coefficients.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{CascadeCoefficients, ModelOrders, Section};
use crate::predictors::{Basis, PredictorSeries};
use crate::series::ComplexSeries;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default bound on `|x|` relative to the data scale before a run is aborted.
pub const DEFAULT_BLOWUP_FACTOR: f64 = 1e6;

/// Per-section output history: `prev1` holds `z^{n-1}`, `prev2` holds
/// `z^{n-2}` (empty for a first-order section). Each is one value per lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionState {
    pub prev1: Vec<Complex64>,
    pub prev2: Vec<Complex64>,
}

/// Internal state of a cascade run over `lanes` independent channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeState {
    pub lanes: usize,
    pub sections: Vec<SectionState>,
}

impl CascadeState {
    pub fn zeros(coeffs: &CascadeCoefficients, lanes: usize) -> Self {
        let sections = coeffs
            .sections()
            .iter()
            .map(|s| SectionState {
                prev1: vec![ZERO; lanes],
                prev2: vec![ZERO; if s.order() == 2 { lanes } else { 0 }],
            })
            .collect();
        Self { lanes, sections }
    }

    /// Number of scalar state slots per lane (equals the degree `p`).
    pub fn slots(&self) -> usize {
        self.sections.iter().map(|s| 1 + usize::from(!s.prev2.is_empty())).sum()
    }

    /// Mutable access to slot `k` of lane `lane`, slots ordered section by
    /// section as `prev1, prev2`.
    pub fn slot_mut(&mut self, k: usize, lane: usize) -> &mut Complex64 {
        let mut k = k;
        for s in &mut self.sections {
            if k == 0 {
                return &mut s.prev1[lane];
            }
            if !s.prev2.is_empty() {
                if k == 1 {
                    return &mut s.prev2[lane];
                }
                k -= 1;
            }
            k -= 1;
        }
        panic!("cascade state slot out of range");
    }

    pub fn slot(&self, k: usize, lane: usize) -> Complex64 {
        let mut c = self.clone();
        *c.slot_mut(k, lane)
    }
}

/// Compiled section list of a [`CascadeCoefficients`].
#[derive(Debug, Clone)]
pub struct CascadeFilter {
    sections: Vec<Section>,
}

impl CascadeFilter {
    pub fn new(coeffs: &CascadeCoefficients) -> Self {
        Self { sections: coeffs.sections() }
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    /// One step on all lanes: `z_i = -alpha_i z_i' - beta_i z_i'' + (input or z_{i-1})`.
    pub fn step(&self, state: &mut CascadeState, input: &[Complex64], output: &mut [Complex64]) {
        output.copy_from_slice(input);
        for (sec, st) in self.sections.iter().zip(state.sections.iter_mut()) {
            match *sec {
                Section::First { alpha } => {
                    for (v, p1) in output.iter_mut().zip(st.prev1.iter_mut()) {
                        let z = *v - *p1 * alpha;
                        *p1 = z;
                        *v = z;
                    }
                }
                Section::Second { alpha, beta } => {
                    for ((v, p1), p2) in output.iter_mut().zip(st.prev1.iter_mut()).zip(st.prev2.iter_mut()) {
                        let z = *v - *p1 * alpha - *p2 * beta;
                        *p2 = *p1;
                        *p1 = z;
                        *v = z;
                    }
                }
            }
        }
    }

    /// Scalar single-lane step on real values; used for impulse responses.
    pub fn step_real(&self, state: &mut [f64], input: f64) -> f64 {
        let mut v = input;
        let mut k = 0;
        for sec in &self.sections {
            match *sec {
                Section::First { alpha } => {
                    let z = v - alpha * state[k];
                    state[k] = z;
                    v = z;
                    k += 1;
                }
                Section::Second { alpha, beta } => {
                    let z = v - alpha * state[k] - beta * state[k + 1];
                    state[k + 1] = state[k];
                    state[k] = z;
                    v = z;
                    k += 2;
                }
            }
        }
        v
    }
}

/// One cascade step; returns the last-section output `y_n`.
pub fn cascade_step(state: &mut CascadeState, coeffs: &CascadeCoefficients, input: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; input.len()];
    CascadeFilter::new(coeffs).step(state, input, &mut out);
    out
}

/// Back-solves the section histories from the last `p` outputs
/// `y_{n-p}, .., y_{n-1}` (oldest first), so that continuing the cascade
/// reproduces the direct degree-`p` recursion.
pub fn init_from_history(coeffs: &CascadeCoefficients, lanes: usize, outputs: &[&[Complex64]]) -> Result<CascadeState> {
    let p = coeffs.order();
    if outputs.len() < p {
        return invalid(format!("cascade initialization needs {p} outputs, got {}", outputs.len()));
    }
    let outputs = &outputs[outputs.len() - p..];
    if outputs.iter().any(|o| o.len() != lanes) {
        return invalid(format!("initial outputs must have {lanes} lanes"));
    }
    let mut state = CascadeState::zeros(coeffs, lanes);
    let sections = coeffs.sections();
    for lane in 0..lanes {
        let mut seq: Vec<Complex64> = outputs.iter().map(|o| o[lane]).collect();
        for (sec, st) in sections.iter().zip(state.sections.iter_mut()).rev() {
            let n = seq.len();
            match *sec {
                Section::First { alpha } => {
                    st.prev1[lane] = seq[n - 1];
                    seq = (1..n).map(|i| seq[i] + seq[i - 1] * alpha).collect();
                }
                Section::Second { alpha, beta } => {
                    st.prev1[lane] = seq[n - 1];
                    st.prev2[lane] = seq[n - 2];
                    seq = (2..n).map(|i| seq[i] + seq[i - 1] * alpha + seq[i - 2] * beta).collect();
                }
            }
        }
        debug_assert!(seq.is_empty());
    }
    Ok(state)
}

/// Zero-input responses: for every state slot (section by section,
/// `prev1` then `prev2`) the output sequence over `horizon` steps after
/// setting that slot to one and all others to zero.
pub fn zero_input_basis(coeffs: &CascadeCoefficients, horizon: usize) -> Vec<Vec<f64>> {
    let filter = CascadeFilter::new(coeffs);
    let p = coeffs.order();
    (0..p)
        .map(|k| {
            let mut st = vec![0.0; p];
            st[k] = 1.0;
            (0..horizon).map(|_| filter.step_real(&mut st, 0.0)).collect()
        })
        .collect()
}

/// Runs the cascade on every predictor entry (lane) with zero initial state:
/// `Y = Psi / A`, so that `sum_j Y_{n-p+j} b_j` equals the zero-state
/// response to the weighted input.
pub fn matrix_cascade(coeffs: &CascadeCoefficients, psi: &PredictorSeries) -> PredictorSeries {
    let lanes = psi.nnz();
    let filter = CascadeFilter::new(coeffs);
    let mut state = CascadeState::zeros(coeffs, lanes);
    let mut values = vec![ZERO; psi.values().len()];
    for t in 0..psi.len() {
        filter.step(&mut state, psi.entries(t), &mut values[t * lanes..(t + 1) * lanes]);
    }
    psi.with_values(values)
}

/// Noise input of a closed-loop run.
#[derive(Debug, Clone, Copy)]
pub enum Injection<'a> {
    /// No noise.
    None,
    /// `series.row(k)` is added to the `k`-th generated state.
    Series(&'a ComplexSeries),
}

/// Exogenous forcing of a closed-loop run: `weights.leads[i]` multiplies
/// `series.row(t + i)` (componentwise) in the stage-one input at time `t`,
/// where `t` indexes the run's time axis (initial segment included).
#[derive(Debug, Clone, Copy)]
pub struct ForcingInput<'a> {
    pub leads: &'a [Vec<Complex64>],
    pub series: &'a ComplexSeries,
}

/// Everything a closed-loop run of a cascade model needs.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a> {
    pub orders: ModelOrders,
    pub coeffs: &'a CascadeCoefficients,
    pub weights: &'a [Vec<Complex64>],
    pub basis: &'a Basis,
    pub forcing: Option<ForcingInput<'a>>,
    /// Abort when `|x|` exceeds this bound; `None` only checks finiteness.
    pub bound: Option<f64>,
}

/// Outcome of a closed-loop run that may stop early.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Generated states (initial segment excluded).
    pub path: ComplexSeries,
    /// Step at which the run was stopped by the guard, if any.
    pub stopped_at: Option<usize>,
}

impl ClosedLoop<'_> {
    /// Length of the initial segment consumed by [`Self::run`].
    pub fn init_len(&self) -> usize {
        self.basis.lag_depth() - 1 + self.orders.p() + 1
    }

    /// Runs `n_steps` states past the initial segment `init`. The last
    /// `init_len()` rows of `init` are used; when `state` is `None` the
    /// cascade is initialized from those observations. Forcing rows are
    /// indexed on the time axis of `init` (row 0 is `init.row(0)`).
    pub fn run(
        &self,
        init: &ComplexSeries,
        state: Option<CascadeState>,
        noise: Injection,
        n_steps: usize,
        stop_on_guard: bool,
    ) -> Result<RunOutcome> {
        let d = self.basis.state_dim();
        let p = self.orders.p();
        let depth = self.basis.lag_depth();
        let need = self.init_len();
        if n_steps == 0 {
            return invalid("a run needs at least one step");
        }
        if init.dim() != d {
            return invalid(format!("initial segment has dimension {}, expected {d}", init.dim()));
        }
        if init.len() < need {
            return invalid(format!("initial segment needs {need} states, got {}", init.len()));
        }
        if self.weights.len() != self.orders.r() + 1 {
            return invalid("weight count does not match r + 1");
        }
        if let Injection::Series(s) = noise {
            if s.len() < n_steps || s.dim() != d {
                return invalid("noise series is shorter than the run or has the wrong dimension");
            }
        }
        // Absolute index (in `init`) of the first state of the used segment.
        let offset = init.len() - need;
        let t0 = offset + depth - 1;
        if let Some(f) = &self.forcing {
            let last = t0 + p + n_steps.saturating_sub(1) + f.leads.len().saturating_sub(1);
            if f.series.len() <= last || f.series.dim() != d {
                return invalid(format!("forcing series must cover {} steps with dimension {d}", last + 1));
            }
        }
        let filter = CascadeFilter::new(self.coeffs);
        let mut state = match state {
            Some(s) => {
                if s.lanes != d || s.slots() != p {
                    return invalid("supplied cascade state does not match the model");
                }
                s
            }
            None => {
                let ys: Vec<&[Complex64]> = (t0 + 1..=t0 + p).map(|t| init.row(t)).collect();
                init_from_history(self.coeffs, d, &ys)?
            }
        };
        let nnz = self.basis.nnz();
        let eval = |hist: &[&[Complex64]]| -> Result<Vec<Complex64>> {
            let mut out = vec![ZERO; nnz];
            self.basis.evaluate(hist, &mut out)?;
            Ok(out)
        };
        // psi[i] = Psi at time t - p + i for the current step time t.
        let mut psi: VecDeque<Vec<Complex64>> = VecDeque::with_capacity(p + 2);
        for t in t0..=t0 + p {
            let hist: Vec<&[Complex64]> = (0..depth).map(|j| init.row(t - j)).collect();
            psi.push_back(eval(&hist)?);
        }
        // Most recent `depth` states, newest last.
        let mut recent: VecDeque<Vec<Complex64>> =
            (t0 + p + 1 - depth..=t0 + p).map(|t| init.row(t).to_vec()).collect();
        let pattern = self.basis.pattern();
        let mut input = vec![ZERO; d];
        let mut y = vec![ZERO; d];
        let mut out = Vec::with_capacity(n_steps * d);
        let mut stopped_at = None;
        for k in 0..n_steps {
            let t = t0 + p + k;
            input.iter_mut().for_each(|z| *z = ZERO);
            for (j, b) in self.weights.iter().enumerate() {
                for (&(row, col), v) in pattern.iter().zip(&psi[j]) {
                    input[row] += v * b[col];
                }
            }
            if let Some(f) = &self.forcing {
                for (i, c) in f.leads.iter().enumerate() {
                    let w = f.series.row(t + i);
                    for ((z, ci), wi) in input.iter_mut().zip(c).zip(w) {
                        *z += ci * wi;
                    }
                }
            }
            filter.step(&mut state, &input, &mut y);
            let mut next = y.clone();
            if let Injection::Series(s) = noise {
                for (a, b) in next.iter_mut().zip(s.row(k)) {
                    *a += b;
                }
            }
            let bad = next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
                || self.bound.is_some_and(|b| next.iter().any(|z| z.norm() > b));
            if bad {
                if stop_on_guard {
                    stopped_at = Some(k);
                    break;
                }
                return Err(Error::BlowUp {
                    step: k,
                    detail: format!("reduced-model state left the admissible range (bound {:?})", self.bound),
                });
            }
            out.extend_from_slice(&next);
            if k + 1 < n_steps {
                recent.pop_front();
                recent.push_back(next);
                let hist: Vec<&[Complex64]> = recent.iter().rev().map(Vec::as_slice).collect();
                psi.pop_front();
                psi.push_back(eval(&hist)?);
            }
        }
        if out.is_empty() {
            return Err(Error::BlowUp { step: 0, detail: "the first reduced-model step already diverged".into() });
        }
        let path = ComplexSeries::new(d, init.dt(), "reduced", out)?;
        Ok(RunOutcome { path, stopped_at })
    }
}

/// Iterates the multistep form
/// `x_{t+1} + a_{p-1} x_t + .. + a_0 x_{t+1-p} = sum_j Psi(x)_{t-p+j} b_j + noise`
/// for `n_steps` states past the initial segment (same layout as
/// [`ClosedLoop::run`]). `a` is constant-first; `noise.row(k)` is the
/// already-filtered noise added to the `k`-th generated state.
#[allow(clippy::too_many_arguments)]
pub fn multistep_run(
    orders: ModelOrders,
    a: &[f64],
    weights: &[Vec<Complex64>],
    basis: &Basis,
    init: &ComplexSeries,
    noise: Injection,
    n_steps: usize,
    bound: Option<f64>,
) -> Result<ComplexSeries> {
    let p = orders.p();
    if a.len() != p {
        return invalid(format!("expected {p} denominator coefficients, got {}", a.len()));
    }
    if weights.len() != orders.r() + 1 {
        return invalid("weight count does not match r + 1");
    }
    let d = basis.state_dim();
    let depth = basis.lag_depth();
    let need = depth - 1 + p + 1;
    if init.len() < need || init.dim() != d {
        return invalid(format!("initial segment needs {need} states of dimension {d}"));
    }
    if n_steps == 0 {
        return invalid("a run needs at least one step");
    }
    if let Injection::Series(s) = noise {
        if s.len() < n_steps || s.dim() != d {
            return invalid("noise series is shorter than the run or has the wrong dimension");
        }
    }
    let offset = init.len() - need;
    let mut xs: Vec<Vec<Complex64>> = (offset..init.len()).map(|t| init.row(t).to_vec()).collect();
    let t0 = depth - 1;
    let nnz = basis.nnz();
    let mut psi: Vec<Vec<Complex64>> = Vec::new();
    let eval_at = |xs: &[Vec<Complex64>], t: usize, psi: &mut Vec<Vec<Complex64>>| -> Result<()> {
        while psi.len() <= t {
            let tt = psi.len();
            let mut out = vec![ZERO; nnz];
            if tt >= t0 {
                let hist: Vec<&[Complex64]> = (0..depth).map(|j| xs[tt - j].as_slice()).collect();
                basis.evaluate(&hist, &mut out)?;
            }
            psi.push(out);
        }
        Ok(())
    };
    let pattern = basis.pattern();
    for k in 0..n_steps {
        let t = t0 + p + k;
        eval_at(&xs, t, &mut psi)?;
        let mut next = vec![ZERO; d];
        for (i, ai) in a.iter().enumerate() {
            for (z, x) in next.iter_mut().zip(&xs[t + 1 - p + i]) {
                *z -= x * ai;
            }
        }
        for (j, b) in weights.iter().enumerate() {
            for (&(row, col), v) in pattern.iter().zip(&psi[t - p + j]) {
                next[row] += v * b[col];
            }
        }
        if let Injection::Series(s) = noise {
            for (z, w) in next.iter_mut().zip(s.row(k)) {
                *z += w;
            }
        }
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
            || bound.is_some_and(|b| next.iter().any(|z| z.norm() > b))
        {
            return Err(Error::BlowUp { step: k, detail: "multistep recursion left the admissible range".into() });
        }
        xs.push(next);
    }
    let data = xs[need..].concat();
    ComplexSeries::new(d, init.dt(), "multistep", data)
}

/// Filters a noise sequence by the monic polynomial:
/// `out_k = xi_k + a_{p-1} xi_{k-1} + .. + a_0 xi_{k-p}`, with zeros before
/// the start.
pub fn filter_noise(a: &[f64], xi: &ComplexSeries) -> ComplexSeries {
    let p = a.len();
    let d = xi.dim();
    let mut out = xi.clone();
    for k in 0..xi.len() {
        for (i, ai) in a.iter().enumerate() {
            // a_i multiplies xi_{k - p + i}.
            if k + i >= p {
                let src = k + i - p;
                for c in 0..d {
                    let v = xi.row(src)[c] * ai;
                    out.row_mut(k)[c] += v;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::expand_cascade;
    use crate::poly::monic_eval;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn trivial_single_stage_passes_input() {
        let coeffs = CascadeCoefficients::new(vec![(0.0, 0.0)], None, 0.0).unwrap();
        let mut st = CascadeState::zeros(&coeffs, 2);
        let out = cascade_step(&mut st, &coeffs, &[c(1.0), c(-2.0)]);
        assert_eq!(out, vec![c(1.0), c(-2.0)]);
    }

    #[test]
    fn impulse_response_matches_closed_form() {
        // Distinct real roots r1, r2: h_n = (r1^{n+1} - r2^{n+1}) / (r1 - r2).
        let (r1, r2) = (0.7, -0.4);
        let coeffs = CascadeCoefficients::new(vec![(-(r1 + r2), r1 * r2)], None, 0.0).unwrap();
        let f = CascadeFilter::new(&coeffs);
        let mut st = vec![0.0; 2];
        for n in 0..30 {
            let h = f.step_real(&mut st, if n == 0 { 1.0 } else { 0.0 });
            let want = (r1.powi(n + 1) - r2.powi(n + 1)) / (r1 - r2);
            assert!((h - want).abs() < 1e-14);
        }
    }

    #[test]
    fn two_stages_equal_degree_four_recursion() {
        let coeffs = CascadeCoefficients::new(vec![(0.3, -0.2), (-1.1, 0.6)], None, 0.0).unwrap();
        let a = expand_cascade(&coeffs);
        let f = CascadeFilter::new(&coeffs);
        let mut st = vec![0.0; 4];
        let u: Vec<f64> = (0..50).map(|n| ((n * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let mut y: Vec<f64> = Vec::new();
        for &un in &u {
            y.push(f.step_real(&mut st, un));
        }
        for n in 4..50 {
            let lhs = y[n] + a[3] * y[n - 1] + a[2] * y[n - 2] + a[1] * y[n - 3] + a[0] * y[n - 4];
            assert!((lhs - u[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn init_from_zero_history_is_zero() {
        let coeffs = CascadeCoefficients::new(vec![(0.3, -0.2), (-1.1, 0.6)], Some(0.1), 0.0).unwrap();
        let z = vec![c(0.0); 3];
        let rows: Vec<&[Complex64]> = (0..5).map(|_| z.as_slice()).collect();
        let st = init_from_history(&coeffs, 3, &rows).unwrap();
        assert_eq!(st, CascadeState::zeros(&coeffs, 3));
    }

    #[test]
    fn init_continues_direct_recursion() {
        let coeffs = CascadeCoefficients::new(vec![(0.3, -0.2), (-1.1, 0.6)], Some(-0.5), 0.0).unwrap();
        let a = expand_cascade(&coeffs);
        let p = a.len();
        let u: Vec<f64> = (0..40).map(|n| ((n * 5 % 13) as f64 - 6.0) / 6.0).collect();
        // Direct recursion from arbitrary initial outputs.
        let mut y = vec![0.3, -0.1, 0.7, 0.2, -0.4];
        for n in p..40 {
            let mut v = u[n];
            for (i, ai) in a.iter().enumerate() {
                v -= ai * y[n - p + i];
            }
            y.push(v);
        }
        let rows: Vec<Vec<Complex64>> = y[..p].iter().map(|&v| vec![c(v)]).collect();
        let refs: Vec<&[Complex64]> = rows.iter().map(Vec::as_slice).collect();
        let mut st = init_from_history(&coeffs, 1, &refs).unwrap();
        for n in p..40 {
            let out = cascade_step(&mut st, &coeffs, &[c(u[n])]);
            assert!((out[0].re - y[n]).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn init_p4_stage_one_values_solve_linear_system() {
        // Stage 2 outputs z2 at n = 0..3 are given; stage-1 values at n = 2, 3
        // follow from z2^n + a z2^{n-1} + b z2^{n-2} = z1^n.
        let (a2, b2) = (-0.4, 0.3);
        let coeffs = CascadeCoefficients::new(vec![(0.2, 0.1), (a2, b2)], None, 0.0).unwrap();
        let z2 = [0.5, -0.25, 1.0, 0.75];
        let rows: Vec<Vec<Complex64>> = z2.iter().map(|&v| vec![c(v)]).collect();
        let refs: Vec<&[Complex64]> = rows.iter().map(Vec::as_slice).collect();
        let st = init_from_history(&coeffs, 1, &refs).unwrap();
        let z1_3 = z2[3] + a2 * z2[2] + b2 * z2[1];
        let z1_2 = z2[2] + a2 * z2[1] + b2 * z2[0];
        assert!((st.sections[0].prev1[0].re - z1_3).abs() < 1e-15);
        assert!((st.sections[0].prev2[0].re - z1_2).abs() < 1e-15);
        assert_eq!(st.sections[1].prev1[0].re, z2[3]);
        assert_eq!(st.sections[1].prev2[0].re, z2[2]);
    }

    #[test]
    fn zero_input_basis_single_stage_closed_form() {
        // z^n = -alpha z^{n-1} - beta z^{n-2}, with z^{-1} = 1, z^{-2} = 0.
        let (r1, r2) = (0.6, 0.3);
        let coeffs = CascadeCoefficients::new(vec![(-(r1 + r2), r1 * r2)], None, 0.0).unwrap();
        let basis = zero_input_basis(&coeffs, 20);
        assert_eq!(basis.len(), 2);
        for (n, v) in basis[0].iter().enumerate() {
            let m = n as i32 + 2;
            let want = (r1.powi(m) - r2.powi(m)) / (r1 - r2);
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_input_basis_decays() {
        let coeffs = CascadeCoefficients::new(vec![(-1.5, 0.8), (0.2, -0.3)], Some(0.5), 0.0).unwrap();
        let rho = coeffs.spectral_radius();
        // Steps per decade of the slowest mode.
        let tau = -std::f64::consts::LN_10 / rho.ln();
        let n = (10.0 * tau).ceil() as usize;
        for seq in zero_input_basis(&coeffs, n) {
            let peak = seq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(seq.last().unwrap().abs() < 1e-8 * peak);
        }
    }

    #[test]
    fn transfer_polynomial_has_factor_roots() {
        let coeffs = CascadeCoefficients::new(vec![(0.5, 0.5)], Some(0.2), 0.0).unwrap();
        let a = expand_cascade(&coeffs);
        for z in coeffs.roots() {
            assert!(monic_eval(&a, z).norm() < 1e-14);
        }
    }
}
