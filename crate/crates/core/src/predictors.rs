//! Predictor bases `Psi(x)`: a `d x m` complex matrix evaluated from the
//! recent history of the observed state.
//!
//! Bases are sparse: only the `(row, col)` entries listed in the basis
//! pattern can be nonzero. A [`PredictorSeries`] stores those entries per
//! time step.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::models::{wavenumbers, Etdrk4, PdeKind};
use crate::series::ComplexSeries;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Version of the column layouts below. Weights fitted under another
/// version are rejected when a model is loaded.
pub const BASIS_VERSION: u32 = 1;

/// How a resolved/buffer product pairs its two factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conjugation {
    /// `v_l * v_{k-l}`: the Fourier coefficient of a product of real
    /// fields, with `v_{-l} = conj(v_l)`.
    Convolution,
    /// `v_l * conj(v_{k-l})`, the product written with an explicit conjugate.
    Literal,
}

/// Serializable description of a basis; [`BasisDescriptor::build`] makes
/// the evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisDescriptor {
    /// `Psi = diag(x_t)`: one coefficient per component.
    Diagonal { dim: usize },
    /// Monomials of the stacked history `[x_t, x_{t-1}, ..]` with full
    /// coupling: row `i` holds the features in columns `i*nf..(i+1)*nf`.
    Features { dim: usize, lags: usize, monomials: Vec<Vec<usize>> },
    /// Kuramoto–Sivashinsky closure basis on `modes` low modes.
    Ks { modes: usize, length: f64, delta: f64, conjugation: Conjugation, version: u32 },
    /// Stochastic Burgers closure basis with `j_max` memory lags.
    Burgers { modes: usize, nu: f64, delta: f64, j_max: usize, conjugation: Conjugation, version: u32 },
    /// Predictors supplied as explicit matrices; such a model can be
    /// inspected but not run, since there is no rule to re-evaluate them.
    Explicit { dim: usize, cols: usize, lag_depth: usize },
}

impl BasisDescriptor {
    pub fn ks(modes: usize, length: f64, delta: f64) -> Self {
        BasisDescriptor::Ks { modes, length, delta, conjugation: Conjugation::Convolution, version: BASIS_VERSION }
    }

    pub fn burgers(modes: usize, nu: f64, delta: f64, j_max: usize) -> Self {
        BasisDescriptor::Burgers {
            modes,
            nu,
            delta,
            j_max,
            conjugation: Conjugation::Convolution,
            version: BASIS_VERSION,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            BasisDescriptor::Diagonal { dim }
            | BasisDescriptor::Features { dim, .. }
            | BasisDescriptor::Explicit { dim, .. } => *dim,
            BasisDescriptor::Ks { modes, .. } | BasisDescriptor::Burgers { modes, .. } => *modes,
        }
    }

    /// Nominal column count `m`.
    pub fn predictor_dim(&self) -> usize {
        match self {
            BasisDescriptor::Diagonal { dim } => *dim,
            BasisDescriptor::Features { dim, monomials, .. } => dim * monomials.len(),
            BasisDescriptor::Ks { modes: k, .. } => 2 * k + k * k,
            BasisDescriptor::Burgers { modes: k, j_max, .. } => 2 * k + j_max * k * k,
            BasisDescriptor::Explicit { cols, .. } => *cols,
        }
    }

    /// Number of states (current included) consumed per evaluation.
    pub fn lag_depth(&self) -> usize {
        match self {
            BasisDescriptor::Diagonal { .. } | BasisDescriptor::Ks { .. } => 1,
            BasisDescriptor::Features { lags, .. } => *lags,
            BasisDescriptor::Burgers { j_max, .. } => *j_max,
            BasisDescriptor::Explicit { lag_depth, .. } => *lag_depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BasisDescriptor::Diagonal { dim } if *dim == 0 => invalid("basis dimension must be positive"),
            BasisDescriptor::Features { dim, lags, monomials } => {
                if *dim == 0 || *lags == 0 {
                    return invalid("feature basis needs positive dimension and lag count");
                }
                if monomials.iter().flatten().any(|&i| i >= dim * lags) {
                    return invalid("monomial index exceeds the stacked history length");
                }
                Ok(())
            }
            BasisDescriptor::Ks { modes, length, delta, version, .. } => {
                check_version(*version)?;
                if *modes == 0 || !(*length > 0.0) || !(*delta > 0.0) {
                    return invalid("KS basis needs positive modes, length and delta");
                }
                Ok(())
            }
            BasisDescriptor::Burgers { modes, nu, delta, j_max, version, .. } => {
                check_version(*version)?;
                if *modes == 0 || !(*nu > 0.0) || !(*delta > 0.0) || *j_max == 0 {
                    return invalid("Burgers basis needs positive modes, nu, delta and j_max");
                }
                Ok(())
            }
            BasisDescriptor::Explicit { .. } => {
                invalid("explicitly supplied predictors cannot be re-evaluated along a new trajectory")
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Basis> {
        self.validate()?;
        let pattern = match self {
            BasisDescriptor::Diagonal { dim } => (0..*dim).map(|i| (i, i)).collect(),
            BasisDescriptor::Features { dim, monomials, .. } => {
                let nf = monomials.len();
                (0..*dim).flat_map(|i| (0..nf).map(move |f| (i, i * nf + f))).collect()
            }
            BasisDescriptor::Ks { modes, .. } => closure_pattern(*modes, 1),
            BasisDescriptor::Burgers { modes, j_max, .. } => closure_pattern(*modes, *j_max),
            BasisDescriptor::Explicit { .. } => unreachable!("rejected by validate"),
        };
        let galerkin = match self {
            BasisDescriptor::Ks { modes, length, delta, .. } => {
                Some(Etdrk4::new(PdeKind::Ks, *length, 0.0, *modes, *delta))
            }
            BasisDescriptor::Burgers { modes, nu, delta, .. } => {
                Some(Etdrk4::new(PdeKind::Burgers, 2.0 * PI, *nu, *modes, *delta))
            }
            _ => None,
        };
        Ok(Basis { desc: self.clone(), pattern, galerkin })
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != BASIS_VERSION {
        return invalid(format!("basis layout version {v} is not supported (expected {BASIS_VERSION})"));
    }
    Ok(())
}

/// Column of the closure product for output mode `k` (1-based), memory lag
/// `j` and buffer magnitude `K + i` (`i` 1-based).
pub fn closure_column(modes: usize, k: usize, j: usize, i: usize) -> usize {
    2 * modes + j * modes * modes + (k - 1) * modes + (i - 1)
}

/// Row `k-1` holds `u_k` in column `k-1`, the Galerkin map in column
/// `K+k-1`, and for every lag the closure products with buffer
/// magnitudes `K+1..=K+k` (larger magnitudes have no resolved partner).
fn closure_pattern(modes: usize, lags: usize) -> Vec<(usize, usize)> {
    let mut p = Vec::new();
    for k in 1..=modes {
        p.push((k - 1, k - 1));
        p.push((k - 1, modes + k - 1));
        for j in 0..lags {
            for i in 1..=k {
                p.push((k - 1, closure_column(modes, k, j, i)));
            }
        }
    }
    p
}

/// Buffer modes `v_{K+1..2K}` reconstructed from the resolved modes:
/// `gain_b * sum_{l=b-K}^{K} u_l u_{b-l}`.
pub fn buffer_modes(u: &[Complex64], gain: impl Fn(usize) -> Complex64) -> Vec<Complex64> {
    let k = u.len();
    (k + 1..=2 * k)
        .map(|b| {
            let s: Complex64 = (b - k..=k).map(|l| u[l - 1] * u[b - l - 1]).sum();
            s * gain(b)
        })
        .collect()
}

/// KS buffer modes: `i * sum u_l u_{b-l}`.
pub fn ks_buffer_modes(u: &[Complex64]) -> Vec<Complex64> {
    buffer_modes(u, |_| Complex64::new(0.0, 1.0))
}

/// Burgers buffer modes for memory lag `j`:
/// `(i lambda_b / 2) exp(-nu lambda_b^2 j delta) sum u_{b-l} u_l`.
pub fn burgers_high_modes(u: &[Complex64], nu: f64, delta: f64, j: usize) -> Vec<Complex64> {
    let lam = wavenumbers(2.0 * PI, 2 * u.len());
    buffer_modes(u, |b| {
        let l = lam[b - 1];
        Complex64::new(0.0, l / 2.0) * (-nu * l * l * j as f64 * delta).exp()
    })
}

/// Resolved modes followed by buffer modes, indexable by signed wavenumber.
struct Extended<'a> {
    resolved: &'a [Complex64],
    buffer: &'a [Complex64],
}

impl Extended<'_> {
    fn at(&self, idx: i64) -> Complex64 {
        let k = self.resolved.len() as i64;
        let a = idx.unsigned_abs() as i64;
        let v = if a == 0 {
            ZERO
        } else if a <= k {
            self.resolved[a as usize - 1]
        } else if a <= 2 * k {
            self.buffer[(a - k) as usize - 1]
        } else {
            ZERO
        };
        if idx < 0 {
            v.conj()
        } else {
            v
        }
    }
}

/// `true` when exactly one of `l`, `k-l` is resolved and the other lies in
/// the buffer band.
pub fn is_resolved_buffer_pair(k: i64, l: i64, modes: i64) -> bool {
    let (a, b) = (l.abs(), (k - l).abs());
    (b <= modes && a > modes && a <= 2 * modes) || (a <= modes && b > modes && b <= 2 * modes)
}

/// Closure products for every output mode, one lag pair: entry
/// `[(k-1) * K + (i-1)]` sums the products whose buffer factor has
/// magnitude `K+i`; the first factor is from `first`, the second from `second`.
fn closure_products(first: &Extended, second: &Extended, conj: Conjugation, out: &mut [Complex64]) {
    let kk = first.resolved.len() as i64;
    out.iter_mut().for_each(|z| *z = ZERO);
    for k in 1..=kk {
        for l in (k - 2 * kk)..=(2 * kk) {
            if !is_resolved_buffer_pair(k, l, kk) {
                continue;
            }
            let buf = l.abs().max((k - l).abs());
            let a = first.at(l);
            let b = second.at(k - l);
            let prod = match conj {
                Conjugation::Convolution => a * b,
                Conjugation::Literal => a * b.conj(),
            };
            out[((k - 1) * kk + (buf - kk - 1)) as usize] += prod;
        }
    }
}

/// Evaluator for a [`BasisDescriptor`].
#[derive(Debug, Clone)]
pub struct Basis {
    desc: BasisDescriptor,
    pattern: Vec<(usize, usize)>,
    galerkin: Option<Etdrk4>,
}

impl Basis {
    pub fn descriptor(&self) -> &BasisDescriptor {
        &self.desc
    }

    pub fn state_dim(&self) -> usize {
        self.desc.state_dim()
    }

    pub fn predictor_dim(&self) -> usize {
        self.desc.predictor_dim()
    }

    pub fn lag_depth(&self) -> usize {
        self.desc.lag_depth()
    }

    /// Structurally nonzero `(row, col)` entries, sorted by row then column.
    pub fn pattern(&self) -> &[(usize, usize)] {
        &self.pattern
    }

    pub fn nnz(&self) -> usize {
        self.pattern.len()
    }

    /// The K-mode Galerkin one-step map over the observation interval.
    pub fn galerkin_onestep(&self, u: &[Complex64]) -> Vec<Complex64> {
        let etd = self.galerkin.as_ref().expect("basis has no Galerkin map");
        let mut v = u.to_vec();
        etd.step(&mut v, &mut etd.workspace());
        v
    }

    /// Evaluates the pattern entries at one time. `history[0]` is the
    /// current state, `history[j]` the state `j` steps back.
    pub fn evaluate(&self, history: &[&[Complex64]], out: &mut [Complex64]) -> Result<()> {
        let depth = self.lag_depth();
        if history.len() < depth {
            return invalid(format!("basis needs {depth} history states, got {}", history.len()));
        }
        let d = self.state_dim();
        if history[..depth].iter().any(|h| h.len() != d) {
            return invalid(format!("history states must have dimension {d}"));
        }
        if out.len() != self.nnz() {
            return invalid(format!("output buffer must have length {}", self.nnz()));
        }
        match &self.desc {
            BasisDescriptor::Diagonal { .. } => out.copy_from_slice(history[0]),
            BasisDescriptor::Features { lags, monomials, .. } => {
                let z: Vec<Complex64> = history[..*lags].iter().flat_map(|h| h.iter().copied()).collect();
                let phi: Vec<Complex64> = monomials
                    .iter()
                    .map(|m| m.iter().fold(Complex64::new(1.0, 0.0), |acc, &i| acc * z[i]))
                    .collect();
                if !phi.is_empty() {
                    for o in out.chunks_exact_mut(phi.len()) {
                        o.copy_from_slice(&phi);
                    }
                }
            }
            BasisDescriptor::Ks { modes, conjugation, .. } => {
                let u = history[0];
                let r = self.galerkin_onestep(u);
                let buf = ks_buffer_modes(u);
                let ext = Extended { resolved: u, buffer: &buf };
                let mut prods = vec![ZERO; modes * modes];
                closure_products(&ext, &ext, *conjugation, &mut prods);
                scatter(u, &r, &[prods], out);
            }
            BasisDescriptor::Burgers { modes, nu, delta, j_max, conjugation, .. } => {
                let u = history[0];
                let r = self.galerkin_onestep(u);
                let buf0 = burgers_high_modes(u, *nu, *delta, 0);
                let first = Extended { resolved: u, buffer: &buf0 };
                let mut blocks = Vec::with_capacity(*j_max);
                for j in 0..*j_max {
                    let bufj = burgers_high_modes(history[j], *nu, *delta, j);
                    let second = Extended { resolved: history[j], buffer: &bufj };
                    let mut prods = vec![ZERO; modes * modes];
                    closure_products(&first, &second, *conjugation, &mut prods);
                    blocks.push(prods);
                }
                scatter(u, &r, &blocks, out);
            }
            BasisDescriptor::Explicit { .. } => unreachable!("explicit bases are never built"),
        }
        Ok(())
    }

    /// Dense `d x m` matrix from pattern entries.
    pub fn dense(&self, entries: &[Complex64]) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.state_dim(), self.predictor_dim());
        for (&(r, c), &v) in self.pattern.iter().zip(entries) {
            m[(r, c)] = v;
        }
        m
    }
}

/// Writes closure-basis entries in pattern order.
fn scatter(u: &[Complex64], galerkin: &[Complex64], blocks: &[Vec<Complex64>], out: &mut [Complex64]) {
    let kk = u.len();
    let mut e = 0;
    for k in 1..=kk {
        out[e] = u[k - 1];
        out[e + 1] = galerkin[k - 1];
        e += 2;
        for block in blocks {
            for i in 1..=k {
                out[e] = block[(k - 1) * kk + (i - 1)];
                e += 1;
            }
        }
    }
}

/// `Psi` evaluated along a trajectory: for each time the pattern entries.
/// Times before `first_valid` lack history and hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSeries {
    rows: usize,
    cols: usize,
    pattern: Vec<(usize, usize)>,
    values: Vec<Complex64>,
    first_valid: usize,
    lag_depth: usize,
    basis: Option<BasisDescriptor>,
}

impl PredictorSeries {
    /// Builds a series from explicit entries (`len * pattern.len()` values).
    pub fn new(
        rows: usize,
        cols: usize,
        pattern: Vec<(usize, usize)>,
        values: Vec<Complex64>,
        first_valid: usize,
    ) -> Result<Self> {
        if pattern.iter().any(|&(r, c)| r >= rows || c >= cols) {
            return invalid("pattern entry outside the matrix shape");
        }
        if pattern.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("pattern must be strictly sorted by (row, col)");
        }
        let nnz = pattern.len().max(1);
        if pattern.is_empty() && !values.is_empty() || !pattern.is_empty() && values.len() % nnz != 0 {
            return invalid("value count is not a multiple of the pattern size");
        }
        Ok(Self { rows, cols, pattern, values, first_valid, lag_depth: first_valid + 1, basis: None })
    }

    /// Dense per-time matrices (all entries in the pattern).
    pub fn from_dense(mats: &[DMatrix<Complex64>]) -> Result<Self> {
        let (rows, cols) = mats.first().map_or((0, 0), |m| m.shape());
        if mats.iter().any(|m| m.shape() != (rows, cols)) {
            return invalid("predictor matrices have differing shapes");
        }
        let pattern: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
        let values = mats.iter().flat_map(|m| pattern.iter().map(|&(r, c)| m[(r, c)]).collect::<Vec<_>>()).collect();
        Self::new(rows, cols, pattern, values, 0)
    }

    pub fn len(&self) -> usize {
        if self.pattern.is_empty() {
            0
        } else {
            self.values.len() / self.pattern.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pattern(&self) -> &[(usize, usize)] {
        &self.pattern
    }

    pub fn nnz(&self) -> usize {
        self.pattern.len()
    }

    pub fn first_valid(&self) -> usize {
        self.first_valid
    }

    pub fn lag_depth(&self) -> usize {
        self.lag_depth
    }

    pub fn basis(&self) -> Option<&BasisDescriptor> {
        self.basis.as_ref()
    }

    /// The generating basis, or an [`BasisDescriptor::Explicit`] stand-in.
    pub fn descriptor(&self) -> BasisDescriptor {
        self.basis.clone().unwrap_or(BasisDescriptor::Explicit {
            dim: self.rows,
            cols: self.cols,
            lag_depth: self.lag_depth,
        })
    }

    /// Pattern entries at time `t`.
    pub fn entries(&self, t: usize) -> &[Complex64] {
        let n = self.pattern.len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn matrix(&self, t: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (&(r, c), &v) in self.pattern.iter().zip(self.entries(t)) {
            m[(r, c)] = v;
        }
        m
    }

    /// `Psi_t * b` for a weight vector of length `cols`, accumulated into `out`.
    pub fn apply_add(&self, t: usize, b: &[Complex64], out: &mut [Complex64]) {
        for (&(r, c), &v) in self.pattern.iter().zip(self.entries(t)) {
            out[r] += v * b[c];
        }
    }

    /// Same entries with a new value array; used for filtered copies.
    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self { values, ..self.clone() }
    }
}

/// Evaluates a basis along an observed series.
pub fn evaluate_series(basis: &Basis, x: &ComplexSeries) -> Result<PredictorSeries> {
    if x.dim() != basis.state_dim() {
        return invalid(format!("series dimension {} does not match basis dimension {}", x.dim(), basis.state_dim()));
    }
    let depth = basis.lag_depth();
    if x.len() < depth {
        return invalid(format!("series of length {} is shorter than the basis history {depth}", x.len()));
    }
    let nnz = basis.nnz();
    let mut values = vec![ZERO; x.len() * nnz];
    let mut hist: Vec<&[Complex64]> = Vec::with_capacity(depth);
    for t in depth - 1..x.len() {
        hist.clear();
        hist.extend((0..depth).map(|j| x.row(t - j)));
        basis.evaluate(&hist, &mut values[t * nnz..(t + 1) * nnz])?;
    }
    Ok(PredictorSeries {
        rows: basis.state_dim(),
        cols: basis.predictor_dim(),
        pattern: basis.pattern().to_vec(),
        values,
        first_valid: depth - 1,
        lag_depth: depth,
        basis: Some(basis.descriptor().clone()),
    })
}
