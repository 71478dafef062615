//! Parameter estimation.
//!
//! The nonlinear fit searches the real section coefficients of `A(z)` with a
//! derivative-free local method; for each candidate the complex weights
//! `b_j`, the optional forcing weights and the homogeneous initial
//! conditions enter linearly and are found by a ridge-regularized least
//! squares solve. The cascade is linear, so the one-step prediction splits
//! into
//!
//! * the zero-state response of every predictor entry, one filtered lane per
//!   pattern entry and lag,
//! * the zero-input response of the state back-solved from the data, a fixed
//!   offset,
//! * optional corrections of that state along the zero-input basis.
//!
//! The normal equations decouple over groups of rows that share no weight
//! column, which keeps each solve small.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{
    init_from_history, zero_input_basis, CascadeFilter, CascadeState, ClosedLoop, ForcingInput, Injection,
    DEFAULT_BLOWUP_FACTOR,
};
use crate::error::{invalid, Error, Result};
use crate::model::{CascadeCoefficients, CascadeModel, ForcingWeights, ModelOrders, DEFAULT_MARGIN};
use crate::optim::{minimize, LinearConstraints, OptimizerConfig, TraceEntry};
use crate::predictors::PredictorSeries;
use crate::series::ComplexSeries;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default relative ridge: `ridge * trace(G) / n` is added to the diagonal.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Condition numbers above this produce a warning in the report.
pub const CONDITION_WARNING: f64 = 1e12;

/// Fitting hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub orders: ModelOrders,
    /// Margin kept from the edges of the stability triangle.
    pub margin: f64,
    pub optimizer: OptimizerConfig,
    /// Relative Tikhonov strength; zero gives plain least squares.
    pub ridge: f64,
    /// Fit the homogeneous initial conditions jointly with the weights.
    pub fit_internal_ics: bool,
    /// Number of forcing leads `q + 1`; zero disables forcing regressors.
    pub forcing_leads: usize,
}

impl FitConfig {
    pub fn new(orders: ModelOrders) -> Self {
        Self {
            orders,
            margin: DEFAULT_MARGIN,
            optimizer: OptimizerConfig::default(),
            ridge: DEFAULT_RIDGE,
            fit_internal_ics: true,
            forcing_leads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.optimizer.max_evals == 0 {
            return invalid("the optimizer needs at least one evaluation");
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return invalid("ridge strength must be finite and nonnegative");
        }
        if !(self.margin >= 0.0 && self.margin < 1.0) {
            return invalid("triangle margin must lie in [0, 1)");
        }
        if !(self.optimizer.initial_radius > 0.0) || !(self.optimizer.min_radius > 0.0) {
            return invalid("optimizer radii must be positive");
        }
        Ok(())
    }
}

/// Observations, their predictors and the optional recorded forcing, all on
/// one time axis.
#[derive(Debug, Clone, Copy)]
pub struct FitData<'a> {
    pub psi: &'a PredictorSeries,
    pub x: &'a ComplexSeries,
    /// Aggregated forcing; row `t` drives the step from `t` to `t + 1`.
    pub forcing: Option<&'a ComplexSeries>,
}

impl<'a> FitData<'a> {
    pub fn new(psi: &'a PredictorSeries, x: &'a ComplexSeries) -> Self {
        Self { psi, x, forcing: None }
    }

    pub fn with_forcing(mut self, forcing: &'a ComplexSeries) -> Self {
        self.forcing = Some(forcing);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Nonlinear,
    Linear,
}

/// Result of a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model: CascadeModel,
    pub method: FitMethod,
    /// Mean squared residual norm per predicted step.
    pub mse: f64,
    /// Mean squared norm of the predicted observations.
    pub signal_power: f64,
    /// One-step residuals `x[t+1] - y[t]`.
    pub residuals: ComplexSeries,
    /// Index in the data of the state matching `residuals.row(0)`.
    pub residual_start: usize,
    /// Linear method only: the residuals of the multistep regression, i.e.
    /// `x[t+1]` minus the predictor built from observed states. They equal
    /// `A(q)` applied to `residuals`. The nonlinear method minimizes
    /// `residuals` directly and leaves this empty.
    #[serde(default)]
    pub equation_residuals: Option<ComplexSeries>,
    /// Cascade state just before the first prediction.
    pub initial_state: CascadeState,
    pub trace: Vec<TraceEntry>,
    pub evaluations: usize,
    pub converged: bool,
    pub stable: bool,
    /// Largest condition number over the blocks of the normal equations.
    pub condition: f64,
    pub warnings: Vec<String>,
}

impl FitReport {
    /// The residuals the fitting method minimized.
    pub fn regression_residuals(&self) -> &ComplexSeries {
        self.equation_residuals.as_ref().unwrap_or(&self.residuals)
    }
}

/// Output of [`inner_solve`].
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub weights: Vec<Vec<Complex64>>,
    pub forcing: Option<ForcingWeights>,
    /// Initial state including the fitted homogeneous corrections.
    pub initial_state: CascadeState,
    /// The fitted corrections alone, `[slot][row]`.
    pub ic_coeffs: Vec<Vec<Complex64>>,
    pub mse: f64,
    pub signal_power: f64,
    pub residuals: ComplexSeries,
    pub condition: f64,
    pub warnings: Vec<String>,
}

/// What a local unknown of a block stands for.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Unknown {
    Weight { lag: usize, col: usize },
    Forcing { lead: usize, row: usize },
    Ic { slot: usize, row: usize },
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Lane { lag: usize, entry: usize },
    Forcing { lead: usize },
    Ic { slot: usize },
}

#[derive(Debug, Clone)]
struct Block {
    unknowns: Vec<Unknown>,
}

/// Index bookkeeping shared by the solves.
#[derive(Debug, Clone)]
struct Layout {
    d: usize,
    p: usize,
    r: usize,
    leads: usize,
    t0: usize,
    n_pred: usize,
    blocks: Vec<Block>,
    row_block: Vec<usize>,
    /// Per row: (local unknown index, source).
    row_terms: Vec<Vec<(usize, Source)>>,
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut i = i;
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl Layout {
    fn new(orders: ModelOrders, data: &FitData, leads: usize, ics: bool) -> Result<Self> {
        let psi = data.psi;
        let x = data.x;
        let d = x.dim();
        let p = orders.p();
        let r = orders.r();
        if psi.rows() != d {
            return invalid(format!("predictors have {} rows but the data has dimension {d}", psi.rows()));
        }
        if psi.len() != x.len() {
            return invalid(format!("predictor series has {} times, data has {}", psi.len(), x.len()));
        }
        let t0 = psi.first_valid();
        let n = x.len();
        if n < t0 + p + 2 {
            return Err(Error::InsufficientData(format!(
                "{n} observations leave no prediction after {} history steps",
                t0 + p + 1
            )));
        }
        let n_pred = n - 1 - t0 - p;
        let forced: Vec<bool> = match (leads, data.forcing) {
            (0, _) => vec![false; d],
            (_, None) => return invalid("forcing leads requested but no forcing series supplied"),
            (_, Some(f)) => {
                if f.dim() != d {
                    return invalid(format!("forcing has dimension {}, data has {d}", f.dim()));
                }
                if f.len() < n - 2 + leads {
                    return invalid(format!("forcing series needs {} rows, got {}", n - 2 + leads, f.len()));
                }
                (0..d).map(|c| (0..f.len()).any(|t| f.row(t)[c] != ZERO)).collect()
            }
        };
        let pattern = psi.pattern();
        let mut parent: Vec<usize> = (0..d).collect();
        let mut owner = vec![usize::MAX; psi.cols()];
        for &(row, col) in pattern {
            if owner[col] == usize::MAX {
                owner[col] = row;
            } else {
                let a = find(&mut parent, owner[col]);
                let b = find(&mut parent, row);
                parent[a] = b;
            }
        }
        let mut root_block = vec![usize::MAX; d];
        let mut row_block = vec![0; d];
        let mut block_rows: Vec<Vec<usize>> = Vec::new();
        for row in 0..d {
            let root = find(&mut parent, row);
            if root_block[root] == usize::MAX {
                root_block[root] = block_rows.len();
                block_rows.push(Vec::new());
            }
            row_block[row] = root_block[root];
            block_rows[root_block[root]].push(row);
        }
        let mut blocks = Vec::with_capacity(block_rows.len());
        let mut row_terms: Vec<Vec<(usize, Source)>> = vec![Vec::new(); d];
        for rows in &block_rows {
            let mut cols: Vec<usize> =
                pattern.iter().filter(|(row, _)| rows.contains(row)).map(|&(_, c)| c).collect();
            cols.sort_unstable();
            cols.dedup();
            let mut unknowns = Vec::new();
            for lag in 0..=r {
                unknowns.extend(cols.iter().map(|&col| Unknown::Weight { lag, col }));
            }
            for lead in 0..leads {
                unknowns.extend(rows.iter().filter(|&&row| forced[row]).map(|&row| Unknown::Forcing { lead, row }));
            }
            if ics {
                for slot in 0..p {
                    unknowns.extend(rows.iter().map(|&row| Unknown::Ic { slot, row }));
                }
            }
            let index = |u: Unknown| unknowns.iter().position(|&v| v == u).expect("unknown registered");
            for (entry, &(row, col)) in pattern.iter().enumerate() {
                if rows.contains(&row) {
                    for lag in 0..=r {
                        row_terms[row].push((index(Unknown::Weight { lag, col }), Source::Lane { lag, entry }));
                    }
                }
            }
            for &row in rows {
                if forced[row] {
                    for lead in 0..leads {
                        row_terms[row].push((index(Unknown::Forcing { lead, row }), Source::Forcing { lead }));
                    }
                }
                if ics {
                    for slot in 0..p {
                        row_terms[row].push((index(Unknown::Ic { slot, row }), Source::Ic { slot }));
                    }
                }
            }
            blocks.push(Block { unknowns });
        }
        Ok(Self { d, p, r, leads, t0, n_pred, blocks, row_block, row_terms })
    }

    fn real_unknowns(&self) -> usize {
        2 * self.blocks.iter().map(|b| b.unknowns.len()).sum::<usize>()
    }
}

/// Accumulated complex normal equations of one block, upper triangle.
#[derive(Debug, Clone)]
struct BlockNormal {
    n: usize,
    /// Unknowns that receive the ridge (weights and forcing, not the
    /// initial-condition corrections, whose scaling depends on the section
    /// order).
    ridged: Vec<bool>,
    h: Vec<Complex64>,
    g: Vec<Complex64>,
    /// `cross[s * n + a] = sum conj(q_s) d_a` for shared real unknowns.
    cross: Vec<Complex64>,
}

#[derive(Debug, Clone)]
struct Normal {
    blocks: Vec<BlockNormal>,
    shared: usize,
    ss: Vec<f64>,
    gs: Vec<f64>,
}

impl Normal {
    fn new(layout: &Layout, shared: usize) -> Self {
        let blocks = layout
            .blocks
            .iter()
            .map(|b| {
                let n = b.unknowns.len();
                let ridged = b.unknowns.iter().map(|u| !matches!(u, Unknown::Ic { .. })).collect();
                BlockNormal { n, ridged, h: vec![ZERO; n * n], g: vec![ZERO; n], cross: vec![ZERO; shared * n] }
            })
            .collect();
        Self { blocks, shared, ss: vec![0.0; shared * shared], gs: vec![0.0; shared] }
    }

    fn add(&mut self, block: usize, target: Complex64, regs: &[(usize, Complex64)], shared: &[Complex64]) {
        let bn = &mut self.blocks[block];
        let n = bn.n;
        for (a, &(ia, da)) in regs.iter().enumerate() {
            let ca = da.conj();
            bn.g[ia] += ca * target;
            for &(ib, db) in &regs[a..] {
                if ia <= ib {
                    bn.h[ia * n + ib] += ca * db;
                } else {
                    bn.h[ib * n + ia] += (ca * db).conj();
                }
            }
        }
        for (s, q) in shared.iter().enumerate() {
            let cq = q.conj();
            for &(ia, da) in regs {
                bn.cross[s * n + ia] += cq * da;
            }
            for (s2, q2) in shared.iter().enumerate() {
                self.ss[s * self.shared + s2] += (cq * q2).re;
            }
            self.gs[s] += (cq * target).re;
        }
    }
}

fn hermitian(bn: &BlockNormal) -> DMatrix<Complex64> {
    let n = bn.n;
    DMatrix::from_fn(n, n, |i, j| if i <= j { bn.h[i * n + j] } else { bn.h[j * n + i].conj() })
}

/// `ridge` times the mean diagonal of the ridged unknowns.
fn ridge_strength(bn: &BlockNormal, h: &DMatrix<Complex64>, ridge: f64) -> f64 {
    let idx: Vec<usize> = (0..bn.n).filter(|&i| bn.ridged[i]).collect();
    if idx.is_empty() {
        return 0.0;
    }
    ridge * idx.iter().map(|&i| h[(i, i)].re).sum::<f64>() / idx.len() as f64
}

fn condition_of_hermitian(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let ev = m.clone().symmetric_eigen().eigenvalues;
    let max = ev.max();
    let min = ev.min();
    if max <= 0.0 {
        return if max == 0.0 && min == 0.0 { 1.0 } else { f64::INFINITY };
    }
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn condition_of_symmetric(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let ev = m.clone().symmetric_eigen().eigenvalues;
    let (max, min) = (ev.max(), ev.min());
    if max <= 0.0 {
        return if max == 0.0 && min == 0.0 { 1.0 } else { f64::INFINITY };
    }
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

struct Solved {
    /// Per block local solutions.
    z: Vec<Vec<Complex64>>,
    shared: Vec<f64>,
    condition: f64,
    warnings: Vec<String>,
}

fn ill(condition: f64, detail: impl Into<String>) -> Error {
    Error::IllConditioned { condition, detail: detail.into() }
}

impl Normal {
    fn solve(&self, ridge: f64) -> Result<Solved> {
        let mut warnings = Vec::new();
        let mut condition: f64 = 1.0;
        if self.shared == 0 {
            let mut z = Vec::with_capacity(self.blocks.len());
            for (bi, bn) in self.blocks.iter().enumerate() {
                let n = bn.n;
                if n == 0 {
                    z.push(Vec::new());
                    continue;
                }
                let h = hermitian(bn);
                let trace: f64 = (0..n).map(|i| h[(i, i)].re).sum();
                if trace == 0.0 {
                    // No regressor carries any signal: the minimum-norm solution.
                    z.push(vec![ZERO; n]);
                    continue;
                }
                let cond = condition_of_hermitian(&h);
                condition = condition.max(cond);
                let lambda = ridge_strength(bn, &h, ridge);
                let mut reg = h;
                for i in (0..n).filter(|&i| bn.ridged[i]) {
                    reg[(i, i)] += lambda;
                }
                let rhs = DVector::from_column_slice(&bn.g);
                let sol = match reg.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None if ridge == 0.0 => {
                        return Err(ill(cond, format!("normal equations of block {bi} are singular")));
                    }
                    None => {
                        warnings.push(format!("block {bi}: Cholesky failed, used a pseudo-inverse"));
                        reg.svd(true, true)
                            .solve(&rhs, 1e-14 * trace)
                            .map_err(|e| ill(cond, format!("block {bi}: {e}")))?
                    }
                };
                if ridge == 0.0 && cond > 1e15 {
                    return Err(ill(cond, format!("normal equations of block {bi} are numerically rank deficient")));
                }
                z.push(sol.iter().copied().collect());
            }
            if condition > CONDITION_WARNING {
                warnings.push(format!(
                    "normal equations are ill-conditioned (condition number {condition:.3e}); regressors may be nearly degenerate"
                ));
            }
            return Ok(Solved { z, shared: Vec::new(), condition, warnings });
        }
        // Shared real unknowns: solve the stacked real system.
        let offsets: Vec<usize> = self
            .blocks
            .iter()
            .scan(0, |acc, b| {
                let o = *acc;
                *acc += 2 * b.n;
                Some(o)
            })
            .collect();
        let nloc: usize = self.blocks.iter().map(|b| 2 * b.n).sum();
        let s = self.shared;
        let nt = nloc + s;
        let mut g = DMatrix::<f64>::zeros(nt, nt);
        let mut rhs = DVector::<f64>::zeros(nt);
        let mut diag_add = vec![0.0; nt];
        for (bn, &o) in self.blocks.iter().zip(&offsets) {
            let n = bn.n;
            let h = hermitian(bn);
            let lambda = ridge_strength(bn, &h, ridge);
            for a in 0..n {
                for b in 0..n {
                    let v = h[(a, b)];
                    g[(o + 2 * a, o + 2 * b)] = v.re;
                    g[(o + 2 * a, o + 2 * b + 1)] = -v.im;
                    g[(o + 2 * a + 1, o + 2 * b)] = v.im;
                    g[(o + 2 * a + 1, o + 2 * b + 1)] = v.re;
                }
                if bn.ridged[a] {
                    diag_add[o + 2 * a] = lambda;
                    diag_add[o + 2 * a + 1] = lambda;
                }
                rhs[o + 2 * a] = bn.g[a].re;
                rhs[o + 2 * a + 1] = bn.g[a].im;
                for k in 0..s {
                    let xv = bn.cross[k * n + a];
                    for (i, v) in [(o + 2 * a, xv.re), (o + 2 * a + 1, -xv.im)] {
                        g[(nloc + k, i)] = v;
                        g[(i, nloc + k)] = v;
                    }
                }
            }
        }
        let trace_s: f64 = (0..s).map(|k| self.ss[k * s + k]).sum();
        for k in 0..s {
            for l in 0..s {
                g[(nloc + k, nloc + l)] = self.ss[k * s + l];
            }
            diag_add[nloc + k] = ridge * trace_s / s as f64;
            rhs[nloc + k] = self.gs[k];
        }
        condition = condition_of_symmetric(&g);
        for (i, v) in diag_add.iter().enumerate() {
            g[(i, i)] += v;
        }
        let sol = match g.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None if ridge == 0.0 => return Err(ill(condition, "stacked normal equations are singular")),
            None => {
                warnings.push("Cholesky failed, used a pseudo-inverse".into());
                let tr = g.trace().max(f64::MIN_POSITIVE);
                g.svd(true, true).solve(&rhs, 1e-14 * tr).map_err(|e| ill(condition, e.to_string()))?
            }
        };
        if ridge == 0.0 && condition > 1e15 {
            return Err(ill(condition, "stacked normal equations are numerically rank deficient"));
        }
        if condition > CONDITION_WARNING {
            warnings.push(format!("normal equations are ill-conditioned (condition number {condition:.3e})"));
        }
        let z = self
            .blocks
            .iter()
            .zip(&offsets)
            .map(|(bn, &o)| (0..bn.n).map(|a| Complex64::new(sol[o + 2 * a], sol[o + 2 * a + 1])).collect())
            .collect();
        let shared = (0..s).map(|k| sol[nloc + k]).collect();
        Ok(Solved { z, shared, condition, warnings })
    }
}

/// Cascade state reproducing the data history before the first prediction.
fn data_state(coeffs: &CascadeCoefficients, x: &ComplexSeries, t0: usize) -> Result<CascadeState> {
    let p = coeffs.order();
    let ys: Vec<&[Complex64]> = (t0 + 1..=t0 + p).map(|t| x.row(t)).collect();
    init_from_history(coeffs, x.dim(), &ys)
}

/// Open-loop one-step predictions with explicit parameters. Returns the
/// residual series and the total squared residual norm.
fn predict(
    layout: &Layout,
    coeffs: &CascadeCoefficients,
    weights: &[Vec<Complex64>],
    forcing: Option<&ForcingWeights>,
    state: &CascadeState,
    data: &FitData,
) -> Result<(ComplexSeries, f64)> {
    let (d, p, t0) = (layout.d, layout.p, layout.t0);
    let filter = CascadeFilter::new(coeffs);
    let mut state = state.clone();
    let mut input = vec![ZERO; d];
    let mut y = vec![ZERO; d];
    let mut out = Vec::with_capacity(layout.n_pred * d);
    let mut sse = 0.0;
    for k in 0..layout.n_pred {
        let t = t0 + p + k;
        input.iter_mut().for_each(|z| *z = ZERO);
        for (j, b) in weights.iter().enumerate() {
            data.psi.apply_add(t - p + j, b, &mut input);
        }
        if let (Some(fw), Some(fs)) = (forcing, data.forcing) {
            for (i, c) in fw.leads.iter().enumerate() {
                for ((z, ci), wi) in input.iter_mut().zip(c).zip(fs.row(t + i)) {
                    *z += ci * wi;
                }
            }
        }
        filter.step(&mut state, &input, &mut y);
        for (yi, xi) in y.iter().zip(data.x.row(t + 1)) {
            let e = xi - yi;
            sse += e.norm_sqr();
            out.push(e);
        }
    }
    Ok((ComplexSeries::new(d, data.x.dt(), "residuals", out)?, sse))
}

/// Residuals of the multistep predictor with monic coefficients `a`
/// (constant first), using observed states on the autoregressive side.
fn equation_errors(
    layout: &Layout,
    a: &[f64],
    weights: &[Vec<Complex64>],
    forcing: Option<&ForcingWeights>,
    data: &FitData,
) -> Result<ComplexSeries> {
    let (d, p, t0) = (layout.d, layout.p, layout.t0);
    let mut row = vec![ZERO; d];
    let mut out = Vec::with_capacity(layout.n_pred * d);
    for k in 0..layout.n_pred {
        let t = t0 + p + k;
        row.iter_mut().for_each(|z| *z = ZERO);
        for (j, b) in weights.iter().enumerate() {
            data.psi.apply_add(t - p + j, b, &mut row);
        }
        if let (Some(fw), Some(fs)) = (forcing, data.forcing) {
            for (i, c) in fw.leads.iter().enumerate() {
                for ((z, ci), wi) in row.iter_mut().zip(c).zip(fs.row(t + i)) {
                    *z += ci * wi;
                }
            }
        }
        for (kk, &ak) in a.iter().enumerate() {
            for (z, xv) in row.iter_mut().zip(data.x.row(t + 1 - p + kk)) {
                *z -= xv * ak;
            }
        }
        out.extend(data.x.row(t + 1).iter().zip(&row).map(|(x, y)| x - y));
    }
    ComplexSeries::new(d, data.x.dt(), "equation residuals", out)
}

fn signal_power(layout: &Layout, x: &ComplexSeries) -> f64 {
    let start = layout.t0 + layout.p + 1;
    let total: f64 = (start..x.len()).map(|t| x.row(t).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
    total / layout.n_pred as f64
}

/// Solves for the weights, forcing weights and homogeneous initial
/// conditions at fixed cascade coefficients, and evaluates the one-step
/// residuals. `mse` is the mean squared residual norm per step.
pub fn inner_solve(coeffs: &CascadeCoefficients, data: &FitData, cfg: &FitConfig) -> Result<InnerSolution> {
    if coeffs.order() != cfg.orders.p() {
        return invalid(format!("cascade degree {} does not match p={}", coeffs.order(), cfg.orders.p()));
    }
    let layout = Layout::new(cfg.orders, data, cfg.forcing_leads, cfg.fit_internal_ics)?;
    inner_with_layout(&layout, coeffs, data, cfg)
}

fn inner_with_layout(
    layout: &Layout,
    coeffs: &CascadeCoefficients,
    data: &FitData,
    cfg: &FitConfig,
) -> Result<InnerSolution> {
    let (d, p, r, t0) = (layout.d, layout.p, layout.r, layout.t0);
    let psi = data.psi;
    let nnz = psi.nnz();
    let filter = CascadeFilter::new(coeffs);
    let base_state = data_state(coeffs, data.x, t0)?;
    let ics = cfg.fit_internal_ics && p > 0;
    let zib = if ics { zero_input_basis(coeffs, layout.n_pred) } else { Vec::new() };

    let mut lag_states: Vec<CascadeState> = (0..=r).map(|_| CascadeState::zeros(coeffs, nnz)).collect();
    let mut lag_out = vec![vec![ZERO; nnz]; r + 1];
    let mut forcing_states: Vec<CascadeState> =
        (0..layout.leads).map(|_| CascadeState::zeros(coeffs, d)).collect();
    let mut forcing_out = vec![vec![ZERO; d]; layout.leads];
    let mut zir_state = base_state.clone();
    let zeros_in = vec![ZERO; d];
    let mut zir = vec![ZERO; d];
    let mut normal = Normal::new(layout, 0);
    let mut regs: Vec<(usize, Complex64)> = Vec::new();
    for k in 0..layout.n_pred {
        let t = t0 + p + k;
        for j in 0..=r {
            filter.step(&mut lag_states[j], psi.entries(t - p + j), &mut lag_out[j]);
        }
        if let Some(fs) = data.forcing {
            for i in 0..layout.leads {
                filter.step(&mut forcing_states[i], fs.row(t + i), &mut forcing_out[i]);
            }
        }
        filter.step(&mut zir_state, &zeros_in, &mut zir);
        let next = data.x.row(t + 1);
        for row in 0..d {
            regs.clear();
            for &(idx, src) in &layout.row_terms[row] {
                let v = match src {
                    Source::Lane { lag, entry } => lag_out[lag][entry],
                    Source::Forcing { lead } => forcing_out[lead][row],
                    Source::Ic { slot } => Complex64::new(zib[slot][k], 0.0),
                };
                regs.push((idx, v));
            }
            normal.add(layout.row_block[row], next[row] - zir[row], &regs, &[]);
        }
    }
    let solved = normal.solve(cfg.ridge)?;

    let m = psi.cols();
    let mut weights = vec![vec![ZERO; m]; r + 1];
    let mut leads = vec![vec![ZERO; d]; layout.leads];
    let mut ic_coeffs = vec![vec![ZERO; d]; p];
    for (block, z) in layout.blocks.iter().zip(&solved.z) {
        for (u, &v) in block.unknowns.iter().zip(z) {
            match *u {
                Unknown::Weight { lag, col } => weights[lag][col] = v,
                Unknown::Forcing { lead, row } => leads[lead][row] = v,
                Unknown::Ic { slot, row } => ic_coeffs[slot][row] = v,
            }
        }
    }
    let mut initial_state = base_state;
    if ics {
        for (slot, per_row) in ic_coeffs.iter().enumerate() {
            for (row, v) in per_row.iter().enumerate() {
                *initial_state.slot_mut(slot, row) += v;
            }
        }
    }
    let forcing = (layout.leads > 0).then(|| ForcingWeights { leads });
    let (residuals, sse) = predict(layout, coeffs, &weights, forcing.as_ref(), &initial_state, data)?;
    Ok(InnerSolution {
        weights,
        forcing,
        initial_state,
        ic_coeffs,
        mse: sse / layout.n_pred as f64,
        signal_power: signal_power(layout, data.x),
        residuals,
        condition: solved.condition,
        warnings: solved.warnings,
    })
}

/// Inequalities `A theta <= b` of the stability triangles (with margin) in
/// the parameter layout `[alpha_1, beta_1, .., alpha_0]`, and the edge
/// directions used by the poll.
pub fn triangle_constraints(p: usize, margin: f64) -> (LinearConstraints, Vec<Vec<f64>>) {
    let pairs = p / 2;
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut dirs = Vec::new();
    let lim = 1.0 - margin;
    for i in 0..pairs {
        for (ca, cb) in [(0.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
            let mut row = vec![0.0; p];
            row[2 * i] = ca;
            row[2 * i + 1] = cb;
            a.push(row);
            b.push(lim);
        }
        for (ca, cb) in [(1.0, 1.0), (1.0, -1.0)] {
            let mut dir = vec![0.0; p];
            dir[2 * i] = ca;
            dir[2 * i + 1] = cb;
            dirs.push(dir);
        }
    }
    if p % 2 == 1 {
        for sgn in [1.0, -1.0] {
            let mut row = vec![0.0; p];
            row[p - 1] = sgn;
            a.push(row);
            b.push(lim);
        }
    }
    (LinearConstraints { a, b }, dirs)
}

const PAIR_STARTS: [(f64, f64); 5] = [(0.0, 0.0), (0.5, 0.25), (-0.5, 0.25), (0.0, 0.5), (0.0, -0.5)];
const LINEAR_STARTS: [f64; 5] = [0.0, 0.5, -0.5, 0.25, -0.25];

/// Built-in start `k`: stage pair `i` starts at the `(k + i) mod 5`-th
/// interior point so that different pairs begin apart.
pub fn default_start(p: usize, k: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(p);
    for i in 0..p / 2 {
        let (a, b) = PAIR_STARTS[(k + i) % PAIR_STARTS.len()];
        x.push(a);
        x.push(b);
    }
    if p % 2 == 1 {
        x.push(LINEAR_STARTS[k % LINEAR_STARTS.len()]);
    }
    x
}

fn check_size(layout: &Layout, p: usize, n: usize) -> Result<()> {
    let free = p + layout.real_unknowns();
    if n <= 10 * free {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {free} free real parameters; need more than {}",
            10 * free
        )));
    }
    Ok(())
}

/// Nonlinear regression: derivative-free search over the section
/// coefficients with the inner linear solve at every candidate.
pub fn fit_nonlinear(data: &FitData, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    let p = cfg.orders.p();
    let layout = Layout::new(cfg.orders, data, cfg.forcing_leads, cfg.fit_internal_ics)?;
    check_size(&layout, p, data.x.len())?;
    let objective = |theta: &[f64]| -> f64 {
        match CascadeCoefficients::from_params(p, theta, cfg.margin) {
            Ok(c) => inner_with_layout(&layout, &c, data, cfg).map_or(f64::INFINITY, |s| s.mse),
            Err(_) => f64::INFINITY,
        }
    };
    let (best_params, trace, evaluations, converged) = if p == 0 {
        (Vec::new(), Vec::new(), 1, true)
    } else {
        let (cons, dirs) = triangle_constraints(p, cfg.margin);
        let mut starts: Vec<Vec<f64>> = (0..cfg.optimizer.default_starts.min(5)).map(|k| default_start(p, k)).collect();
        for s in &cfg.optimizer.extra_starts {
            if s.len() != p {
                return invalid(format!("start point has {} parameters, expected {p}", s.len()));
            }
            starts.push(s.clone());
        }
        if starts.is_empty() {
            starts.push(default_start(p, 0));
        }
        let budget = (cfg.optimizer.max_evals / starts.len()).max(1);
        let results: Vec<_> = starts
            .par_iter()
            .enumerate()
            .map(|(k, x0)| {
                let mut f = |x: &[f64]| objective(x);
                minimize(&mut f, x0, &cons, &dirs, &cfg.optimizer, budget, k)
            })
            .collect();
        let mut trace: Vec<TraceEntry> = results.iter().flat_map(|r| r.trace.iter().cloned()).collect();
        let mut best = f64::INFINITY;
        for e in &mut trace {
            best = best.min(e.value);
            e.best = best;
        }
        let evaluations = results.iter().map(|r| r.evals).sum();
        let converged = results.iter().any(|r| r.converged);
        let winner = results
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("at least one start");
        if !winner.value.is_finite() {
            return Err(Error::NonFinite("every candidate cascade produced a non-finite loss".into()));
        }
        (winner.x.clone(), trace, evaluations, converged)
    };
    let coeffs = CascadeCoefficients::from_params(p, &best_params, cfg.margin)?;
    let sol = inner_with_layout(&layout, &coeffs, data, cfg)?;
    let mut warnings = sol.warnings.clone();
    if !converged {
        warnings.push("optimizer stopped at the evaluation budget without meeting its tolerances".into());
    }
    let model = CascadeModel::new(cfg.orders, coeffs, sol.weights, sol.forcing, data.psi.descriptor())?;
    let stable = model.is_stable();
    Ok(FitReport {
        model,
        method: FitMethod::Nonlinear,
        mse: sol.mse,
        signal_power: sol.signal_power,
        residuals: sol.residuals,
        residual_start: layout.t0 + p + 1,
        equation_residuals: None,
        initial_state: sol.initial_state,
        trace,
        evaluations,
        converged,
        stable,
        condition: sol.condition,
        warnings,
    })
}

/// Linear regression on the multistep one-step predictor
/// `x[t+1] = -sum_k a_k x[t+1-p+k] + sum_j Psi[t-p+j] b_j (+ forcing)`,
/// with `a` real and shared by all components. The fitted polynomial is
/// factored into sections; an unstable result is returned flagged.
pub fn fit_linear(data: &FitData, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    let p = cfg.orders.p();
    let r = cfg.orders.r();
    let layout = Layout::new(cfg.orders, data, cfg.forcing_leads, false)?;
    let (d, t0) = (layout.d, layout.t0);
    if data.x.len() <= p + r + 1 + t0 {
        return Err(Error::InsufficientData("too few observations for the requested orders".into()));
    }
    let psi = data.psi;
    let mut normal = Normal::new(&layout, p);
    let mut regs = Vec::new();
    let mut shared = vec![ZERO; p];
    for k in 0..layout.n_pred {
        let t = t0 + p + k;
        let next = data.x.row(t + 1);
        for row in 0..d {
            regs.clear();
            for &(idx, src) in &layout.row_terms[row] {
                let v = match src {
                    Source::Lane { lag, entry } => psi.entries(t - p + lag)[entry],
                    Source::Forcing { lead } => data.forcing.map_or(ZERO, |f| f.row(t + lead)[row]),
                    Source::Ic { .. } => unreachable!("no initial-condition unknowns in the linear fit"),
                };
                regs.push((idx, v));
            }
            for (kk, q) in shared.iter_mut().enumerate() {
                *q = -data.x.row(t + 1 - p + kk)[row];
            }
            normal.add(layout.row_block[row], next[row], &regs, &shared);
        }
    }
    let solved = normal.solve(cfg.ridge)?;
    let mut weights = vec![vec![ZERO; psi.cols()]; r + 1];
    let mut leads = vec![vec![ZERO; d]; layout.leads];
    for (block, z) in layout.blocks.iter().zip(&solved.z) {
        for (u, &v) in block.unknowns.iter().zip(z) {
            match *u {
                Unknown::Weight { lag, col } => weights[lag][col] = v,
                Unknown::Forcing { lead, row } => leads[lead][row] = v,
                Unknown::Ic { .. } => {}
            }
        }
    }
    let (coeffs, stable) = CascadeCoefficients::from_monic(&solved.shared, cfg.margin)?;
    let mut warnings = solved.warnings;
    if !stable {
        warnings.push(format!(
            "fitted A(z) has spectral radius {:.6}; the model is unstable",
            coeffs.spectral_radius()
        ));
    }
    let forcing = (layout.leads > 0).then(|| ForcingWeights { leads });
    let state = data_state(&coeffs, data.x, t0)?;
    let (residuals, sse) = predict(&layout, &coeffs, &weights, forcing.as_ref(), &state, data)?;
    let equation = equation_errors(&layout, &solved.shared, &weights, forcing.as_ref(), data)?;
    let model = CascadeModel::new(cfg.orders, coeffs, weights, forcing, psi.descriptor())?;
    Ok(FitReport {
        model,
        method: FitMethod::Linear,
        mse: sse / layout.n_pred as f64,
        signal_power: signal_power(&layout, data.x),
        residuals,
        residual_start: t0 + p + 1,
        equation_residuals: Some(equation),
        initial_state: state,
        trace: Vec::new(),
        evaluations: 1,
        converged: true,
        stable,
        condition: solved.condition,
        warnings,
    })
}

/// Outcome of [`replay_residuals`].
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    /// Regenerated states, aligned with `x.row(residual_start + k)`.
    pub path: ComplexSeries,
    /// `|path_k - x_k| / rms(x)` per step.
    pub relative_error: Vec<f64>,
    /// First step whose relative error exceeds one, if any.
    pub diverged_at: Option<usize>,
}

impl ReplayOutcome {
    pub fn max_error(&self, steps: usize) -> f64 {
        self.relative_error.iter().take(steps).copied().fold(0.0, f64::max)
    }
}

/// Runs the model in closed loop with the fitted residuals injected as
/// noise. In exact arithmetic this reproduces the data; the growth of the
/// error measures round-off amplification of the model.
pub fn replay_residuals(
    model: &CascadeModel,
    report: &FitReport,
    x: &ComplexSeries,
    forcing: Option<&ComplexSeries>,
) -> Result<ReplayOutcome> {
    let basis = model.basis.build()?;
    let start = report.residual_start;
    let n_steps = report.residuals.len();
    if x.len() < start + n_steps {
        return invalid("data is shorter than the residual record");
    }
    let init = x.slice(0, start)?;
    let scale = x.max_abs().max(f64::MIN_POSITIVE);
    let run = ClosedLoop {
        orders: model.orders,
        coeffs: &model.cascade,
        weights: &model.weights,
        basis: &basis,
        forcing: match (&model.forcing, forcing) {
            (Some(fw), Some(series)) => Some(ForcingInput { leads: &fw.leads, series }),
            (Some(_), None) => return invalid("the model is forced but no forcing series was supplied"),
            _ => None,
        },
        bound: Some(DEFAULT_BLOWUP_FACTOR * scale),
    };
    let out = run.run(&init, Some(report.initial_state.clone()), Injection::Series(&report.residuals), n_steps, true)?;
    let rms = (x.rows().map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>() / x.len() as f64)
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let relative_error: Vec<f64> = out
        .path
        .rows()
        .enumerate()
        .map(|(k, row)| {
            row.iter().zip(x.row(start + k)).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / rms
        })
        .collect();
    let diverged_at = relative_error
        .iter()
        .position(|&e| e > 1.0)
        .or(out.stopped_at);
    Ok(ReplayOutcome { path: out.path, relative_error, diverged_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::BasisDescriptor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cn(rng: &mut ChaCha8Rng, s: f64) -> Complex64 {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        Complex64::new(a, b) * s
    }

    /// Diagonal basis data generated by a known cascade with white noise.
    fn synthetic(coeffs: &CascadeCoefficients, b: &[Vec<Complex64>], n: usize, noise: f64) -> ComplexSeries {
        let d = b[0].len();
        let basis = BasisDescriptor::Diagonal { dim: d }.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = coeffs.order();
        let init_rows: Vec<Vec<Complex64>> = (0..p + 1).map(|_| (0..d).map(|_| cn(&mut rng, 1.0)).collect()).collect();
        let init = ComplexSeries::from_rows(&init_rows, 1.0, "init").unwrap();
        let xi_rows: Vec<Vec<Complex64>> = (0..n).map(|_| (0..d).map(|_| cn(&mut rng, noise)).collect()).collect();
        let xi = ComplexSeries::from_rows(&xi_rows, 1.0, "xi").unwrap();
        let orders = ModelOrders::new(p, b.len() - 1).unwrap();
        let run = ClosedLoop { orders, coeffs, weights: b, basis: &basis, forcing: None, bound: None };
        let out = run.run(&init, None, Injection::Series(&xi), n, false).unwrap();
        let mut all = init_rows;
        all.extend(out.path.rows().map(<[Complex64]>::to_vec));
        ComplexSeries::from_rows(&all, 1.0, "x").unwrap()
    }

    fn diag_psi(x: &ComplexSeries) -> PredictorSeries {
        let basis = BasisDescriptor::Diagonal { dim: x.dim() }.build().unwrap();
        crate::predictors::evaluate_series(&basis, x).unwrap()
    }

    #[test]
    fn inner_solve_recovers_weights_without_noise() {
        let coeffs = CascadeCoefficients::new(vec![(0.3, 0.2)], None, DEFAULT_MARGIN).unwrap();
        let b = vec![
            vec![Complex64::new(0.5, 0.1), Complex64::new(-0.2, 0.3)],
            vec![Complex64::new(0.1, -0.2), Complex64::new(0.4, 0.0)],
            vec![Complex64::new(-0.3, 0.05), Complex64::new(0.1, 0.1)],
        ];
        // Drive with noise on a short segment so the states are rich, then
        // fit only the noise-free part that follows.
        let x = synthetic(&coeffs, &b, 400, 1.0);
        let psi = diag_psi(&x);
        let mut cfg = FitConfig::new(ModelOrders::new(2, 2).unwrap());
        cfg.ridge = 0.0;
        // Exact data: regenerate without noise from the same start.
        let basis = BasisDescriptor::Diagonal { dim: 2 }.build().unwrap();
        let run = ClosedLoop { orders: cfg.orders, coeffs: &coeffs, weights: &b, basis: &basis, forcing: None, bound: None };
        let init = x.slice(0, 3).unwrap();
        let clean = run.run(&init, None, Injection::None, 50, false).unwrap().path;
        let mut rows: Vec<Vec<Complex64>> = init.rows().map(<[Complex64]>::to_vec).collect();
        rows.extend(clean.rows().map(<[Complex64]>::to_vec));
        let exact = ComplexSeries::from_rows(&rows, 1.0, "x").unwrap();
        let psi_exact = diag_psi(&exact);
        let sol = inner_solve(&coeffs, &FitData::new(&psi_exact, &exact), &cfg).unwrap();
        for (bj, want) in sol.weights.iter().zip(&b) {
            for (g, w) in bj.iter().zip(want) {
                assert!((g - w).norm() < 1e-8, "{g} vs {w}");
            }
        }
        assert!(sol.mse < 1e-16 * sol.signal_power, "{} {}", sol.mse, sol.signal_power);
        assert!(psi.len() == x.len());
    }

    #[test]
    fn zero_predictors_give_zero_weights() {
        let rows: Vec<Vec<Complex64>> = (0..200).map(|t| vec![Complex64::new((t as f64).sin(), 0.5)]).collect();
        let x = ComplexSeries::from_rows(&rows, 1.0, "x").unwrap();
        let psi = PredictorSeries::new(1, 1, vec![(0, 0)], vec![ZERO; 200], 0).unwrap();
        let mut cfg = FitConfig::new(ModelOrders::new(0, 0).unwrap());
        cfg.fit_internal_ics = false;
        let sol = inner_solve(&CascadeCoefficients::zeros(0, DEFAULT_MARGIN), &FitData::new(&psi, &x), &cfg).unwrap();
        assert_eq!(sol.weights[0][0], ZERO);
        assert!((sol.mse - sol.signal_power).abs() < 1e-12 * sol.signal_power);
    }

    #[test]
    fn duplicated_column_with_ridge_warns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 300;
        let xs: Vec<Complex64> = (0..n).map(|_| cn(&mut rng, 1.0)).collect();
        let x = ComplexSeries::new(1, 1.0, "x", xs.clone()).unwrap();
        let vals: Vec<Complex64> = xs.iter().flat_map(|&v| [v, v]).collect();
        let psi = PredictorSeries::new(1, 2, vec![(0, 0), (0, 1)], vals, 0).unwrap();
        let mut cfg = FitConfig::new(ModelOrders::new(0, 0).unwrap());
        let sol = inner_solve(&CascadeCoefficients::zeros(0, DEFAULT_MARGIN), &FitData::new(&psi, &x), &cfg).unwrap();
        assert!(sol.weights[0].iter().all(|w| w.re.is_finite() && w.im.is_finite()));
        assert!(!sol.warnings.is_empty());
        cfg.ridge = 0.0;
        let err = inner_solve(&CascadeCoefficients::zeros(0, DEFAULT_MARGIN), &FitData::new(&psi, &x), &cfg);
        assert!(matches!(err, Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn stage_permutation_leaves_loss_unchanged() {
        let c1 = CascadeCoefficients::new(vec![(0.3, 0.2), (-0.4, 0.1)], None, DEFAULT_MARGIN).unwrap();
        let c2 = CascadeCoefficients::new(vec![(-0.4, 0.1), (0.3, 0.2)], None, DEFAULT_MARGIN).unwrap();
        let b = vec![vec![Complex64::new(0.3, 0.1)]; 3];
        let x = synthetic(&c1, &b, 500, 0.1);
        let psi = diag_psi(&x);
        let cfg = FitConfig::new(ModelOrders::new(4, 2).unwrap());
        let data = FitData::new(&psi, &x);
        let e1 = inner_solve(&c1, &data, &cfg).unwrap().mse;
        let e2 = inner_solve(&c2, &data, &cfg).unwrap().mse;
        assert!((e1 - e2).abs() <= 1e-10 * e1, "{e1} {e2}");
    }

    #[test]
    fn inner_solution_is_first_order_optimal() {
        let coeffs = CascadeCoefficients::new(vec![(0.2, -0.3)], Some(0.1), DEFAULT_MARGIN).unwrap();
        let b = vec![vec![Complex64::new(0.2, 0.1)]; 2];
        let x = synthetic(&coeffs, &b, 400, 0.3);
        let psi = diag_psi(&x);
        let mut cfg = FitConfig::new(ModelOrders::new(3, 1).unwrap());
        cfg.fit_internal_ics = false;
        cfg.ridge = 0.0;
        let data = FitData::new(&psi, &x);
        let sol = inner_solve(&coeffs, &data, &cfg).unwrap();
        let layout = Layout::new(cfg.orders, &data, 0, false).unwrap();
        let state = data_state(&coeffs, &x, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let mut w = sol.weights.clone();
            for bj in &mut w {
                for v in bj.iter_mut() {
                    *v += cn(&mut rng, 1e-4);
                }
            }
            let (_, sse) = predict(&layout, &coeffs, &w, None, &state, &data).unwrap();
            assert!(sse / layout.n_pred as f64 >= sol.mse * (1.0 - 1e-12));
        }
    }

    #[test]
    fn nonlinear_fit_finds_cascade() {
        let truth = CascadeCoefficients::new(vec![(-0.6, 0.3)], None, DEFAULT_MARGIN).unwrap();
        let b = vec![vec![Complex64::new(0.4, 0.2)], vec![Complex64::new(-0.3, 0.1)], vec![Complex64::new(0.1, 0.0)]];
        let x = synthetic(&truth, &b, 4000, 1e-3);
        let psi = diag_psi(&x);
        let cfg = FitConfig::new(ModelOrders::new(2, 2).unwrap());
        let rep = fit_nonlinear(&FitData::new(&psi, &x), &cfg).unwrap();
        let (a, bb) = rep.model.cascade.pairs()[0];
        assert!((a + 0.6).abs() < 1e-2 && (bb - 0.3).abs() < 1e-2, "{a} {bb}");
        assert!(rep.trace.windows(2).all(|w| w[1].best <= w[0].best));
        assert_eq!(rep.residuals.len(), x.len() - 3);
    }

    #[test]
    fn zero_order_fit_is_plain_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 500;
        let mut xs = vec![cn(&mut rng, 1.0)];
        for t in 0..n - 1 {
            let prev = xs[t];
            xs.push(prev * Complex64::new(0.5, 0.2) + cn(&mut rng, 0.01));
        }
        let x = ComplexSeries::new(1, 1.0, "x", xs).unwrap();
        let psi = diag_psi(&x);
        let rep = fit_nonlinear(&FitData::new(&psi, &x), &FitConfig::new(ModelOrders::new(0, 0).unwrap())).unwrap();
        assert!((rep.model.weights[0][0] - Complex64::new(0.5, 0.2)).norm() < 5e-3);
        assert!(rep.trace.is_empty());
    }

    #[test]
    fn linear_fit_recovers_ar_model_exactly() {
        // x[t+1] + a0 x[t] = b0 x[t-1] with a diagonal basis: an AR(2)
        // recursion with one real and one complex coefficient.
        let a0 = -0.4;
        let b0 = Complex64::new(-0.3, 0.2);
        let mut xs = vec![Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.8)];
        for t in 1..120 {
            let v = -a0 * xs[t] + b0 * xs[t - 1];
            xs.push(v);
        }
        let x = ComplexSeries::new(1, 1.0, "x", xs).unwrap();
        let psi = diag_psi(&x);
        let mut cfg = FitConfig::new(ModelOrders::new(1, 0).unwrap());
        cfg.ridge = 0.0;
        let rep = fit_linear(&FitData::new(&psi, &x), &cfg).unwrap();
        assert!((rep.model.cascade.linear().unwrap() - a0).abs() < 1e-10);
        assert!((rep.model.weights[0][0] - b0).norm() < 1e-10);
        assert!(rep.mse < 1e-24);
    }

    #[test]
    fn linear_fit_flags_collinear_regressors() {
        // x[t+1] + a1 x[t] + a0 x[t-1] = b0 x[t-2] + b1 x[t-1] + b2 x[t].
        let a = [0.2, -0.5];
        let b = [Complex64::new(0.1, 0.05), Complex64::new(0.3, 0.0), Complex64::new(-0.2, 0.1)];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut xs: Vec<Complex64> = (0..3).map(|_| cn(&mut rng, 1.0)).collect();
        for t in 2..300 {
            let v = -a[1] * xs[t] - a[0] * xs[t - 1] + b[0] * xs[t - 2] + b[1] * xs[t - 1] + b[2] * xs[t];
            xs.push(v);
        }
        let x = ComplexSeries::new(1, 1.0, "x", xs).unwrap();
        let psi = diag_psi(&x);
        let mut cfg = FitConfig::new(ModelOrders::new(2, 2).unwrap());
        cfg.ridge = 0.0;
        let rep = fit_linear(&FitData::new(&psi, &x), &cfg);
        // The combined lags are collinear with the autoregressive terms for a
        // diagonal basis, so plain least squares must report it.
        assert!(matches!(rep, Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn linear_fit_on_independent_predictors() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 3000;
        let a0 = -0.7;
        let bw = Complex64::new(0.8, -0.3);
        let feat: Vec<Complex64> = (0..n).map(|_| cn(&mut rng, 1.0)).collect();
        // With p = 1, r = 0 the predictor enters one step late:
        // x[t+1] + a0 x[t] = Psi[t-1] b0.
        let mut xs = vec![ZERO, ZERO];
        for t in 1..n - 1 {
            let v = -a0 * xs[t] + bw * feat[t - 1];
            xs.push(v);
        }
        let x = ComplexSeries::new(1, 1.0, "x", xs).unwrap();
        let psi = PredictorSeries::new(1, 1, vec![(0, 0)], feat, 0).unwrap();
        let mut cfg = FitConfig::new(ModelOrders::new(1, 0).unwrap());
        cfg.ridge = 0.0;
        let rep = fit_linear(&FitData::new(&psi, &x), &cfg).unwrap();
        assert!((rep.model.cascade.linear().unwrap() - a0).abs() < 1e-10, "{:?} {:?}", rep.model.cascade, rep.model.weights);
        assert!((rep.model.weights[0][0] - bw).norm() < 1e-10);
        assert!(rep.stable);
        assert!(rep.mse < 1e-20);
        assert_eq!(rep.model.basis, BasisDescriptor::Explicit { dim: 1, cols: 1, lag_depth: 1 });
    }

    #[test]
    fn linear_equation_residuals_are_filtered_output_residuals() {
        let coeffs = CascadeCoefficients::new(vec![(-0.5, 0.3)], None, DEFAULT_MARGIN).unwrap();
        let b = vec![vec![Complex64::new(0.2, 0.1)], vec![Complex64::new(-0.1, 0.0)], vec![Complex64::new(0.05, 0.0)]];
        let x = synthetic(&coeffs, &b, 2000, 0.1);
        let psi = diag_psi(&x);
        let rep = fit_linear(&FitData::new(&psi, &x), &FitConfig::new(ModelOrders::new(2, 2).unwrap())).unwrap();
        let eq = rep.equation_residuals.as_ref().unwrap();
        assert_eq!(eq.len(), rep.residuals.len());
        let filtered = crate::cascade::filter_noise(&crate::model::expand_cascade(&rep.model.cascade), &rep.residuals);
        for k in 2..eq.len() {
            assert!((eq.row(k)[0] - filtered.row(k)[0]).norm() < 1e-10, "row {k}");
        }
        let ms = |s: &ComplexSeries| s.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / s.len() as f64;
        // Least squares on the equation error cannot beat the true noise level by much.
        assert!((ms(eq) / 0.02 - 1.0).abs() < 0.1, "{}", ms(eq));
        assert!(std::ptr::eq(rep.regression_residuals(), eq));
    }

    #[test]
    fn forcing_identity_toy_system() {
        // x[t+1] = w[t]: c0 = 1, all else 0.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 800;
        let w: Vec<Complex64> = (0..n + 1).map(|_| cn(&mut rng, 1.0)).collect();
        let mut xs = vec![ZERO];
        xs.extend_from_slice(&w[..n - 1]);
        let x = ComplexSeries::new(1, 1.0, "x", xs).unwrap();
        let f = ComplexSeries::new(1, 1.0, "w", w).unwrap();
        let psi = diag_psi(&x);
        let mut cfg = FitConfig::new(ModelOrders::new(0, 0).unwrap());
        cfg.forcing_leads = 2;
        cfg.ridge = 0.0;
        let rep = fit_nonlinear(&FitData::new(&psi, &x).with_forcing(&f), &cfg).unwrap();
        let fw = rep.model.forcing.as_ref().unwrap();
        assert!((fw.leads[0][0] - 1.0).norm() < 1e-8, "{:?}", fw.leads);
        assert!(fw.leads[1][0].norm() < 1e-8);
        assert!(rep.model.weights[0][0].norm() < 1e-8);
        assert!(rep.mse < 1e-14);
    }

    #[test]
    fn replay_reconstructs_noisy_synthetic_data() {
        let truth = CascadeCoefficients::new(vec![(-0.5, 0.2)], Some(0.3), DEFAULT_MARGIN).unwrap();
        let b = vec![vec![Complex64::new(0.3, 0.1), Complex64::new(0.1, 0.0)]; 2];
        let x = synthetic(&truth, &b, 1500, 0.05);
        let psi = diag_psi(&x);
        let mut cfg = FitConfig::new(ModelOrders::new(3, 1).unwrap());
        cfg.optimizer.max_evals = 300;
        let rep = fit_nonlinear(&FitData::new(&psi, &x), &cfg).unwrap();
        let out = replay_residuals(&rep.model, &rep, &x, None).unwrap();
        assert!(out.max_error(1000) < 1e-10, "{}", out.max_error(1000));
        assert!(out.diverged_at.is_none());
    }

    #[test]
    fn triangle_constraints_match_membership() {
        let (cons, _) = triangle_constraints(3, 1e-6);
        assert!(cons.feasible(&[0.0, 0.0, 0.0]));
        assert!(!cons.feasible(&[0.0, 1.0, 0.0]));
        assert!(!cons.feasible(&[0.0, 0.0, 1.0]));
        assert!(!cons.feasible(&[1.5, 0.4, 0.0]));
        for k in 0..5 {
            assert!(cons.feasible(&default_start(3, k)));
        }
    }
}
