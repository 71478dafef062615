//! Model orders, cascade coefficients and the fitted reduced model.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::poly::{monic_from_roots, monic_roots, poly_mul, quadratic_roots, triangle_contains};
use crate::predictors::BasisDescriptor;

/// Default strict-interior margin kept between cascade coefficients and the
/// stability boundary.
pub const DEFAULT_MARGIN: f64 = 1e-6;

/// Memory order `p` (degree of A) and predictor-lag order `r` (degree of B).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOrders {
    p: usize,
    r: usize,
}

impl ModelOrders {
    pub fn new(p: usize, r: usize) -> Result<Self> {
        if r > p {
            return invalid(format!("predictor lag order r={r} exceeds memory order p={p}"));
        }
        Ok(Self { p, r })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.r
    }
}

/// One factor of A(z): `z + alpha` or `z^2 + alpha z + beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Section {
    First { alpha: f64 },
    Second { alpha: f64, beta: f64 },
}

impl Section {
    pub fn order(&self) -> usize {
        match self {
            Section::First { .. } => 1,
            Section::Second { .. } => 2,
        }
    }
}

/// Factorization of A(z) into quadratic sections plus an optional linear one.
///
/// The free-parameter layout used by the optimizer is
/// `[alpha_1, beta_1, ..., alpha_s, beta_s, alpha_0]`, the last entry present
/// only for odd `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeCoefficients {
    pairs: Vec<(f64, f64)>,
    linear: Option<f64>,
    margin: f64,
}

impl CascadeCoefficients {
    /// Validated constructor: every pair must lie in the stability triangle
    /// shrunk by `margin`, and `|alpha_0| <= 1 - margin`. With zero margin the
    /// boundary itself is excluded.
    pub fn new(pairs: Vec<(f64, f64)>, linear: Option<f64>, margin: f64) -> Result<Self> {
        if !(margin >= 0.0) || margin >= 1.0 {
            return invalid(format!("margin must lie in [0, 1), got {margin}"));
        }
        for &(a, b) in &pairs {
            let ok = a.is_finite()
                && b.is_finite()
                && triangle_contains(a, b, margin)
                && b < 1.0
                && b > a.abs() - 1.0;
            if !ok {
                return invalid(format!(
                    "pair (alpha={a}, beta={b}) lies outside the stability triangle with margin {margin}"
                ));
            }
        }
        if let Some(a0) = linear {
            if !(a0.is_finite() && a0.abs() <= 1.0 - margin && a0.abs() < 1.0) {
                return invalid(format!("linear factor alpha0={a0} violates |alpha0| < 1 - margin"));
            }
        }
        Ok(Self { pairs, linear, margin })
    }

    /// Builds coefficients without the stability check. Used only to carry
    /// unstable linear-regression fits so they can be flagged, never fixed.
    pub fn new_unchecked(pairs: Vec<(f64, f64)>, linear: Option<f64>, margin: f64) -> Self {
        Self { pairs, linear, margin }
    }

    /// The trivial factorization `A(z) = z^p`.
    pub fn zeros(p: usize, margin: f64) -> Self {
        Self {
            pairs: vec![(0.0, 0.0); p / 2],
            linear: (p % 2 == 1).then_some(0.0),
            margin,
        }
    }

    pub fn from_params(p: usize, params: &[f64], margin: f64) -> Result<Self> {
        if params.len() != p {
            return invalid(format!("expected {p} cascade parameters, got {}", params.len()));
        }
        let pairs = params[..2 * (p / 2)].chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let linear = (p % 2 == 1).then(|| params[p - 1]);
        Self::new(pairs, linear, margin)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        v.extend(self.linear);
        v
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn linear(&self) -> Option<f64> {
        self.linear
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Degree of A(z).
    pub fn order(&self) -> usize {
        2 * self.pairs.len() + usize::from(self.linear.is_some())
    }

    /// Sections in cascade order: the linear factor first, then the pairs.
    pub fn sections(&self) -> Vec<Section> {
        let mut s: Vec<Section> = self.linear.map(|alpha| Section::First { alpha }).into_iter().collect();
        s.extend(self.pairs.iter().map(|&(alpha, beta)| Section::Second { alpha, beta }));
        s
    }

    /// Roots of A(z) as the union of the factor roots.
    pub fn roots(&self) -> Vec<Complex64> {
        let mut r: Vec<Complex64> = self.pairs.iter().flat_map(|&(a, b)| quadratic_roots(a, b)).collect();
        r.extend(self.linear.map(|a| Complex64::new(-a, 0.0)));
        r
    }

    /// Largest root modulus (0 for `p = 0`).
    pub fn spectral_radius(&self) -> f64 {
        self.roots().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    /// Factors a monic polynomial (lower coefficients, constant-first) into
    /// sections by pairing conjugate roots, then real roots in sorted order.
    /// Returns the coefficients and whether all roots lie inside the unit disc.
    pub fn from_monic(a: &[f64], margin: f64) -> Result<(Self, bool)> {
        if a.is_empty() {
            return Ok((Self::zeros(0, margin), true));
        }
        let roots = monic_roots(a)?;
        let scale = roots.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let tol = 1e-9 * scale;
        let mut reals: Vec<f64> = Vec::new();
        let mut upper: Vec<Complex64> = Vec::new();
        let mut lower: Vec<Complex64> = Vec::new();
        for z in roots {
            if z.im.abs() <= tol {
                reals.push(z.re);
            } else if z.im > 0.0 {
                upper.push(z);
            } else {
                lower.push(z);
            }
        }
        let mut pairs = Vec::new();
        for z in upper {
            // Symmetrize against the nearest lower-half partner.
            let (idx, _) = lower
                .iter()
                .enumerate()
                .map(|(i, w)| (i, (w - z.conj()).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .ok_or_else(|| crate::Error::InvalidInput("complex root without conjugate partner".into()))?;
            let w = lower.swap_remove(idx);
            let m = (z + w.conj()) / 2.0;
            pairs.push((-2.0 * m.re, m.norm_sqr()));
        }
        // Any leftover unmatched lower roots are treated by their real part.
        reals.extend(lower.iter().map(|z| z.re));
        reals.sort_by(f64::total_cmp);
        let linear = if reals.len() % 2 == 1 { Some(-reals.remove(0)) } else { None };
        for c in reals.chunks_exact(2) {
            pairs.push((-(c[0] + c[1]), c[0] * c[1]));
        }
        let coeffs = Self::new_unchecked(pairs, linear, margin);
        let stable = coeffs.is_stable();
        Ok((coeffs, stable))
    }
}

/// Lower coefficients `a_0..a_{p-1}` (constant-first) of the monic
/// A(z) = prod(z^2 + alpha_i z + beta_i) * (z + alpha_0).
pub fn expand_cascade(c: &CascadeCoefficients) -> Vec<f64> {
    let mut poly = vec![1.0];
    if let Some(a0) = c.linear {
        poly = poly_mul(&poly, &[a0, 1.0]);
    }
    for &(a, b) in &c.pairs {
        poly = poly_mul(&poly, &[b, a, 1.0]);
    }
    poly.pop();
    poly
}

/// Lower coefficients of the monic polynomial with the given roots.
pub fn monic_coefficients(roots: &[Complex64]) -> Vec<f64> {
    monic_from_roots(roots)
}

/// Weights of the exogenous forcing term: `leads[i]` multiplies the forcing
/// aggregate `i` observation steps ahead, per state component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingWeights {
    pub leads: Vec<Vec<Complex64>>,
}

/// A fitted reduced model
/// `x[t+1] = y[t] + xi[t+1]`, `A(q) y = B(q) Psi (+ forcing)`.
///
/// `weights[j]` is the complex weight vector of length `predictor_dim`
/// multiplying `Psi[t-p+j]`; the product `Psi * b_j` is a state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    pub orders: ModelOrders,
    pub cascade: CascadeCoefficients,
    pub weights: Vec<Vec<Complex64>>,
    pub forcing: Option<ForcingWeights>,
    pub basis: BasisDescriptor,
    pub state_dim: usize,
    pub predictor_dim: usize,
}

impl CascadeModel {
    pub fn new(
        orders: ModelOrders,
        cascade: CascadeCoefficients,
        weights: Vec<Vec<Complex64>>,
        forcing: Option<ForcingWeights>,
        basis: BasisDescriptor,
    ) -> Result<Self> {
        let state_dim = basis.state_dim();
        let predictor_dim = basis.predictor_dim();
        if cascade.order() != orders.p() {
            return invalid(format!(
                "cascade degree {} does not match p={}",
                cascade.order(),
                orders.p()
            ));
        }
        if weights.len() != orders.r() + 1 {
            return invalid(format!("expected {} weight blocks, got {}", orders.r() + 1, weights.len()));
        }
        if weights.iter().any(|w| w.len() != predictor_dim) {
            return invalid(format!("every weight block must have length {predictor_dim}"));
        }
        if let Some(f) = &forcing {
            if f.leads.is_empty() || f.leads.iter().any(|c| c.len() != state_dim) {
                return invalid(format!("forcing weights must be non-empty blocks of length {state_dim}"));
            }
        }
        Ok(Self { orders, cascade, weights, forcing, basis, state_dim, predictor_dim })
    }

    pub fn is_stable(&self) -> bool {
        self.cascade.is_stable()
    }

    /// Number of initial observations needed to start a run: the basis
    /// history plus `p + 1` states.
    pub fn init_len(&self) -> usize {
        self.basis.lag_depth() - 1 + self.orders.p() + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_identity_and_symmetric_pair() {
        let c = CascadeCoefficients::new(vec![(0.0, 0.0), (0.0, 0.0)], None, 0.0).unwrap();
        assert_eq!(expand_cascade(&c), vec![0.0; 4]);
        let c = CascadeCoefficients::new(vec![(1.0, 0.25), (-1.0, 0.25)], None, 0.0).unwrap();
        assert_eq!(expand_cascade(&c), vec![0.0625, 0.0, -0.5, 0.0]);
    }

    #[test]
    fn expand_two_pairs_general() {
        let (a1, b1, a2, b2) = (0.3, -0.2, -1.1, 0.6);
        let c = CascadeCoefficients::new(vec![(a1, b1), (a2, b2)], None, 0.0).unwrap();
        let a = expand_cascade(&c);
        let want = [b1 * b2, a1 * b2 + a2 * b1, b1 + b2 + a1 * a2, a1 + a2];
        for (x, y) in a.iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn expand_odd_order() {
        let c = CascadeCoefficients::new(vec![(0.5, 0.1)], Some(-0.4), 0.0).unwrap();
        // (z - 0.4)(z^2 + 0.5 z + 0.1) = z^3 + 0.1 z^2 - 0.1 z - 0.04
        let a = expand_cascade(&c);
        for (x, y) in a.iter().zip([-0.04, -0.1, 0.1]) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn constructor_enforces_margin() {
        assert!(CascadeCoefficients::new(vec![(0.0, 1.0)], None, 0.0).is_err());
        assert!(CascadeCoefficients::new(vec![(0.0, 1.0 - 1e-7)], None, 1e-6).is_err());
        assert!(CascadeCoefficients::new(vec![], Some(1.0), 0.0).is_err());
        assert!(CascadeCoefficients::new(vec![(0.5, 0.0)], Some(-0.99), 1e-6).is_ok());
    }

    #[test]
    fn params_roundtrip() {
        let c = CascadeCoefficients::from_params(5, &[0.1, 0.2, -0.3, 0.4, 0.5], 1e-6).unwrap();
        assert_eq!(c.pairs(), &[(0.1, 0.2), (-0.3, 0.4)]);
        assert_eq!(c.linear(), Some(0.5));
        assert_eq!(c.params(), vec![0.1, 0.2, -0.3, 0.4, 0.5]);
    }

    #[test]
    fn from_monic_recovers_factors() {
        let c = CascadeCoefficients::new(vec![(0.4, 0.3), (-0.5, -0.2)], Some(0.25), 0.0).unwrap();
        let (back, stable) = CascadeCoefficients::from_monic(&expand_cascade(&c), 0.0).unwrap();
        assert!(stable);
        let a0 = expand_cascade(&c);
        let a1 = expand_cascade(&back);
        for (x, y) in a0.iter().zip(&a1) {
            assert!((x - y).abs() < 1e-12);
        }
        let (_, stable) = CascadeCoefficients::from_monic(&[1.0, -2.5], 0.0).unwrap();
        assert!(!stable);
    }
}
