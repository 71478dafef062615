//! Derivative-free minimization over a polytope `{x : A x <= b}`.
//!
//! Each iteration first tries a trust-region step on a quadratic model fitted
//! by least squares to nearby evaluated points. When the model step is
//! unavailable or poor, a poll over a fixed direction set (coordinates plus
//! caller-supplied directions such as polytope edge directions) is
//! evaluated; the poll requires a sufficient decrease proportional to the
//! squared step and halves the step after an unsuccessful poll. With a
//! direction set that positively spans the tangent cones of the polytope
//! this is a generating set search, which converges to a KKT point of a
//! smooth objective as the step size goes to zero; the model steps only
//! accelerate it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Linear inequality constraints `a_i . x <= b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraints {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LinearConstraints {
    pub fn none() -> Self {
        Self { a: Vec::new(), b: Vec::new() }
    }

    pub fn feasible(&self, x: &[f64]) -> bool {
        self.a.iter().zip(&self.b).all(|(ai, bi)| dot(ai, x) <= *bi + 1e-12)
    }

    /// Euclidean projection onto the polytope intersected with an optional
    /// box `|x - center|_inf <= radius`, by Dykstra's alternating projections.
    pub fn project(&self, x: &[f64], bx: Option<(&[f64], f64)>) -> Vec<f64> {
        let n = x.len();
        let m = self.a.len() + usize::from(bx.is_some());
        let mut y = x.to_vec();
        let mut incr = vec![vec![0.0; n]; m];
        for _ in 0..500 {
            let prev = y.clone();
            for (k, inc) in incr.iter_mut().enumerate() {
                let z: Vec<f64> = y.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
                let p = if k < self.a.len() {
                    let ai = &self.a[k];
                    let viol = dot(ai, &z) - self.b[k];
                    if viol > 0.0 {
                        let nn = dot(ai, ai);
                        z.iter().zip(ai).map(|(zi, a)| zi - viol / nn * a).collect()
                    } else {
                        z.clone()
                    }
                } else {
                    let (c, r) = bx.expect("box projection index without a box");
                    z.iter().zip(c).map(|(zi, ci)| zi.clamp(ci - r, ci + r)).collect::<Vec<f64>>()
                };
                for i in 0..n {
                    inc[i] = z[i] - p[i];
                }
                y = p;
            }
            let moved: f64 = y.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if moved < 1e-15 {
                break;
            }
        }
        // Dykstra converges in the limit; pull strictly inside if needed.
        for _ in 0..50 {
            let worst = self
                .a
                .iter()
                .zip(&self.b)
                .map(|(ai, bi)| (dot(ai, &y) - bi, ai))
                .fold(None::<(f64, &Vec<f64>)>, |acc, (v, ai)| match acc {
                    Some((w, _)) if w >= v => acc,
                    _ => Some((v, ai)),
                });
            match worst {
                Some((v, ai)) if v > 0.0 => {
                    let nn = dot(ai, ai);
                    for i in 0..n {
                        y[i] -= (v + 1e-14) / nn * ai[i];
                    }
                }
                _ => break,
            }
        }
        y
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Settings of [`minimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Name recorded in reports.
    pub algorithm: String,
    /// Evaluation budget shared by all starts.
    pub max_evals: usize,
    pub initial_radius: f64,
    /// Stop when the step size falls below this.
    pub min_radius: f64,
    /// Stop when the best value improved by less than this relative amount
    /// over the last few iterations at a small step size.
    pub ftol_rel: f64,
    /// Additional start points (full parameter vectors).
    pub extra_starts: Vec<Vec<f64>>,
    /// Number of built-in start points to use (at most 5).
    pub default_starts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: "quadratic-model trust region with generating-set poll".into(),
            max_evals: 2000,
            initial_radius: 0.25,
            min_radius: 1e-7,
            ftol_rel: 1e-8,
            extra_starts: Vec::new(),
            default_starts: 5,
        }
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub start: usize,
    pub x: Vec<f64>,
    pub value: f64,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

struct Evaluator<'a> {
    f: &'a mut dyn FnMut(&[f64]) -> f64,
    start: usize,
    budget: usize,
    evals: usize,
    best: f64,
    trace: Vec<TraceEntry>,
    history: Vec<(Vec<f64>, f64)>,
}

impl Evaluator<'_> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.evals >= self.budget {
            return None;
        }
        let v = (self.f)(x);
        let v = if v.is_finite() { v } else { f64::INFINITY };
        self.evals += 1;
        if v < self.best {
            self.best = v;
        }
        self.trace.push(TraceEntry { start: self.start, x: x.to_vec(), value: v, best: self.best });
        self.history.push((x.to_vec(), v));
        Some(v)
    }
}

/// Quadratic model `m(s) = c + g.s + s^T B s / 2` in scaled coordinates.
struct Quadratic {
    g: DVector<f64>,
    b: DMatrix<f64>,
}

impl Quadratic {
    fn value(&self, s: &DVector<f64>) -> f64 {
        self.g.dot(s) + 0.5 * s.dot(&(&self.b * s))
    }
}

fn fit_quadratic(center: &[f64], radius: f64, pts: &[(Vec<f64>, f64)], fc: f64) -> Option<Quadratic> {
    let n = center.len();
    let nq = 1 + n + n * (n + 1) / 2;
    if pts.len() < nq {
        return None;
    }
    let mut a = DMatrix::<f64>::zeros(pts.len(), nq);
    let mut rhs = DVector::<f64>::zeros(pts.len());
    for (row, (x, fx)) in pts.iter().enumerate() {
        let s: Vec<f64> = x.iter().zip(center).map(|(xi, ci)| (xi - ci) / radius).collect();
        a[(row, 0)] = 1.0;
        for i in 0..n {
            a[(row, 1 + i)] = s[i];
        }
        let mut col = 1 + n;
        for i in 0..n {
            for j in i..n {
                a[(row, col)] = if i == j { 0.5 * s[i] * s[i] } else { s[i] * s[j] };
                col += 1;
            }
        }
        rhs[row] = fx - fc;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-8 * smax) {
        return None;
    }
    let coef = svd.solve(&rhs, 1e-12 * smax).ok()?;
    let g = DVector::from_iterator(n, (0..n).map(|i| coef[1 + i]));
    let mut b = DMatrix::zeros(n, n);
    let mut col = 1 + n;
    for i in 0..n {
        for j in i..n {
            b[(i, j)] = coef[col];
            b[(j, i)] = coef[col];
            col += 1;
        }
    }
    Some(Quadratic { g, b })
}

/// Approximately minimizes the model over the scaled box `|s|_inf <= 1`
/// intersected with the feasible polytope, by projected gradient descent.
fn model_step(q: &Quadratic, center: &[f64], radius: f64, cons: &LinearConstraints) -> DVector<f64> {
    let n = center.len();
    let to_x = |s: &DVector<f64>| -> Vec<f64> { (0..n).map(|i| center[i] + radius * s[i]).collect() };
    let to_s = |x: &[f64]| -> DVector<f64> { DVector::from_iterator(n, (0..n).map(|i| (x[i] - center[i]) / radius)) };
    let project = |s: &DVector<f64>| -> DVector<f64> { to_s(&cons.project(&to_x(s), Some((center, radius)))) };
    let lip = q.b.norm().max(1e-12);
    let mut best = DVector::zeros(n);
    let mut best_val = 0.0;
    let gn = q.g.amax();
    let starts = if gn > 0.0 { vec![DVector::zeros(n), project(&(-&q.g / gn))] } else { vec![DVector::zeros(n)] };
    for s0 in starts {
        let mut s = s0;
        let mut step = 1.0 / lip;
        let mut val = q.value(&s);
        for _ in 0..200 {
            let grad = &q.g + &q.b * &s;
            let trial = project(&(&s - &grad * step));
            let tv = q.value(&trial);
            if tv < val - 1e-15 * val.abs() {
                let moved = (&trial - &s).amax();
                s = trial;
                val = tv;
                if moved < 1e-10 {
                    break;
                }
                step *= 1.5;
            } else {
                step *= 0.5;
                if step < 1e-12 / lip {
                    break;
                }
            }
        }
        if val < best_val {
            best_val = val;
            best = s;
        }
    }
    best
}

/// Minimizes `f` from `x0` over the polytope. `poll_dirs` are added to the
/// coordinate directions of the poll. `start` tags trace entries.
pub fn minimize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    cons: &LinearConstraints,
    poll_dirs: &[Vec<f64>],
    cfg: &OptimizerConfig,
    budget: usize,
    start: usize,
) -> OptimResult {
    let n = x0.len();
    let mut ev = Evaluator {
        f,
        start,
        budget: budget.max(1),
        evals: 0,
        best: f64::INFINITY,
        trace: Vec::new(),
        history: Vec::new(),
    };
    let mut x = if cons.feasible(x0) { x0.to_vec() } else { cons.project(x0, None) };
    let mut fx = match ev.eval(&x) {
        Some(v) => v,
        None => unreachable!("budget is at least one"),
    };
    let scale = fx.abs().max(f64::MIN_POSITIVE);
    let mut radius = cfg.initial_radius;
    let max_radius = 4.0 * cfg.initial_radius;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for sgn in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = sgn;
            dirs.push(d);
        }
    }
    for d in poll_dirs {
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            dirs.push(d.iter().map(|v| v / norm).collect());
            dirs.push(d.iter().map(|v| -v / norm).collect());
        }
    }
    let nq = 1 + n + n * (n + 1) / 2;
    let mut recent: Vec<f64> = vec![fx];
    let mut converged = false;
    if n == 0 {
        return OptimResult { x, value: fx, evals: ev.evals, converged: true, trace: ev.trace };
    }
    'outer: loop {
        if radius <= cfg.min_radius {
            converged = true;
            break;
        }
        // Model step.
        let mut near: Vec<(Vec<f64>, f64)> = ev
            .history
            .iter()
            .filter(|(y, fy)| {
                fy.is_finite() && y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= 2.0 * radius
            })
            .cloned()
            .collect();
        near.sort_by(|a, b| {
            let da: f64 = a.0.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum();
            let db: f64 = b.0.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum();
            da.total_cmp(&db)
        });
        near.truncate(2 * nq);
        let mut model_ok = false;
        if let Some(q) = fit_quadratic(&x, radius, &near, fx) {
            let s = model_step(&q, &x, radius, cons);
            let pred = -q.value(&s);
            if pred > 0.0 && s.amax() > 1e-3 {
                let trial: Vec<f64> = (0..n).map(|i| x[i] + radius * s[i]).collect();
                if cons.feasible(&trial) {
                    let Some(ft) = ev.eval(&trial) else { break 'outer };
                    let rho = (fx - ft) / pred;
                    if ft < fx {
                        x = trial;
                        fx = ft;
                    }
                    if rho >= 0.75 && s.amax() > 0.9 {
                        radius = (2.0 * radius).min(max_radius);
                    }
                    model_ok = rho >= 0.1;
                }
            }
        }
        if !model_ok {
            let forcing = 1e-10 * scale * radius * radius;
            let mut improved = false;
            for d in &dirs {
                let y: Vec<f64> = (0..n).map(|i| x[i] + radius * d[i]).collect();
                if !cons.feasible(&y) {
                    continue;
                }
                let Some(fy) = ev.eval(&y) else { break 'outer };
                if fy < fx - forcing {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
            if !improved {
                radius *= 0.5;
            }
        }
        recent.push(fx);
        if recent.len() > 2 * n + 2 {
            recent.remove(0);
            let old = recent[0];
            if radius < 1e-3 * cfg.initial_radius && (old - fx) <= cfg.ftol_rel * fx.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }
    OptimResult { x, value: fx, evals: ev.evals, converged, trace: ev.trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_quadratic() {
        let mut f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.2).powi(2) + 0.5 * x[0] * x[1];
        let r = minimize(&mut f, &[0.0, 0.0], &LinearConstraints::none(), &[], &OptimizerConfig::default(), 500, 0);
        // Stationary point of the quadratic.
        let a = nalgebra::Matrix2::new(2.0, 0.5, 0.5, 4.0);
        let b = nalgebra::Vector2::new(0.6, -0.8);
        let want = a.lu().solve(&b).unwrap();
        assert!((r.x[0] - want[0]).abs() < 1e-5 && (r.x[1] - want[1]).abs() < 1e-5, "{:?}", r.x);
        assert!(r.converged);
    }

    #[test]
    fn constrained_minimum_on_edge() {
        // Minimize distance to (2, 2) subject to x + y <= 1.
        let cons = LinearConstraints { a: vec![vec![1.0, 1.0]], b: vec![1.0] };
        let mut f = |x: &[f64]| (x[0] - 2.0).powi(2) + (x[1] - 2.0).powi(2);
        let r = minimize(&mut f, &[0.0, 0.0], &cons, &[vec![1.0, -1.0]], &OptimizerConfig::default(), 1000, 0);
        assert!((r.x[0] - 0.5).abs() < 1e-4 && (r.x[1] - 0.5).abs() < 1e-4, "{:?}", r.x);
        assert!(r.trace.iter().all(|t| cons.feasible(&t.x)));
    }

    #[test]
    fn rosenbrock_in_triangle() {
        let cons = LinearConstraints {
            a: vec![vec![0.0, 1.0], vec![1.0, -1.0], vec![-1.0, -1.0]],
            b: vec![1.0, 1.0, 1.0],
        };
        let mut f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (0.6 - x[0]).powi(2);
        let r = minimize(&mut f, &[0.0, 0.0], &cons, &[vec![1.0, 1.0], vec![1.0, -1.0]], &OptimizerConfig::default(), 3000, 0);
        assert!((r.x[0] - 0.6).abs() < 1e-3 && (r.x[1] - 0.36).abs() < 1e-3, "{:?} {}", r.x, r.evals);
    }

    #[test]
    fn trace_best_is_monotone() {
        let mut f = |x: &[f64]| (x[0] - 0.1).abs() + x[1] * x[1];
        let r = minimize(&mut f, &[0.5, 0.5], &LinearConstraints::none(), &[], &OptimizerConfig::default(), 300, 0);
        assert!(r.trace.windows(2).all(|w| w[1].best <= w[0].best));
    }

    #[test]
    fn projection_lands_inside() {
        let cons = LinearConstraints { a: vec![vec![1.0, 1.0], vec![-1.0, 0.0]], b: vec![1.0, 0.0] };
        let p = cons.project(&[3.0, 3.0], None);
        assert!(cons.feasible(&p));
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
    }
}
