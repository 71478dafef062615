//! Real polynomial algebra for the autoregressive denominator A(z).
//!
//! Coefficient vectors are stored constant-first: `[c0, c1, ..., cn]` means
//! `c0 + c1 z + ... + cn z^n`. Monic polynomials of degree `p` are passed as
//! their `p` lower coefficients `a0..a_{p-1}` where noted.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Product of two constant-first polynomials.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Evaluates a constant-first complex-coefficient polynomial by Horner's rule.
pub fn poly_eval(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &x| acc * z + x)
}

/// Evaluates the monic polynomial `z^p + a_{p-1} z^{p-1} + ... + a0`.
pub fn monic_eval(a: &[f64], z: Complex64) -> Complex64 {
    a.iter().rev().fold(Complex64::new(1.0, 0.0), |acc, &x| acc * z + x)
}

fn monic_derivative_eval(a: &[f64], z: Complex64) -> Complex64 {
    let p = a.len();
    let mut acc = Complex64::new(p as f64, 0.0);
    for k in (1..p).rev() {
        acc = acc * z + a[k] * k as f64;
    }
    acc
}

/// `true` iff `z^2 + alpha z + beta` has both roots in the closed triangle
/// shrunk by `margin`: `beta <= 1 - margin` and `beta >= |alpha| - 1 + margin`.
///
/// The unshrunk triangle has vertices (-2, 1), (2, 1) and (0, -1).
pub fn triangle_contains(alpha: f64, beta: f64, margin: f64) -> bool {
    debug_assert!(margin >= 0.0);
    beta <= 1.0 - margin && beta >= alpha - 1.0 + margin && beta >= -alpha - 1.0 + margin
}

/// Roots of `z^2 + alpha z + beta`.
pub fn quadratic_roots(alpha: f64, beta: f64) -> [Complex64; 2] {
    let disc = alpha * alpha - 4.0 * beta;
    if disc >= 0.0 {
        // Numerically stable form avoids cancellation in the small root.
        let s = disc.sqrt();
        let sgn = if alpha >= 0.0 { 1.0 } else { -1.0 };
        let q = -0.5 * (alpha + sgn * s);
        let r1 = q;
        let r2 = if q != 0.0 { beta / q } else { -alpha - q };
        [Complex64::new(r1, 0.0), Complex64::new(r2, 0.0)]
    } else {
        let im = (-disc).sqrt() / 2.0;
        [Complex64::new(-alpha / 2.0, im), Complex64::new(-alpha / 2.0, -im)]
    }
}

/// Roots of the monic polynomial with lower coefficients `a` (constant-first),
/// from companion-matrix eigenvalues refined by Newton steps.
pub fn monic_roots(a: &[f64]) -> Result<Vec<Complex64>> {
    let p = a.len();
    if p == 0 {
        return invalid("root finding needs a polynomial of degree at least 1");
    }
    if a.iter().any(|x| !x.is_finite()) {
        return invalid("polynomial coefficients must be finite");
    }
    if p == 1 {
        return Ok(vec![Complex64::new(-a[0], 0.0)]);
    }
    if p == 2 {
        return Ok(quadratic_roots(a[1], a[0]).to_vec());
    }
    let mut comp = DMatrix::<f64>::zeros(p, p);
    for i in 1..p {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..p {
        comp[(i, p - 1)] = -a[i];
    }
    let mut roots: Vec<Complex64> = comp.complex_eigenvalues().iter().copied().collect();
    for z in roots.iter_mut() {
        for _ in 0..3 {
            let f = monic_eval(a, *z);
            let df = monic_derivative_eval(a, *z);
            if df.norm() <= 1e-300 {
                break;
            }
            let step = f / df;
            let cand = *z - step;
            if monic_eval(a, cand).norm() < f.norm() {
                *z = cand;
            } else {
                break;
            }
        }
    }
    Ok(roots)
}

/// `true` iff every root of the monic polynomial `z^p + a_{p-1} z^{p-1} + ... + a0`
/// has modulus strictly below one.
pub fn roots_inside_unit_disc(a: &[f64]) -> Result<bool> {
    Ok(monic_roots(a)?.iter().all(|z| z.norm() < 1.0))
}

/// Lower coefficients of the monic polynomial with the given roots. Complex
/// roots must come in conjugate pairs; the tiny imaginary residue is dropped.
pub fn monic_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, &x) in c.iter().enumerate() {
            next[i + 1] += x;
            next[i] -= x * r;
        }
        c = next;
    }
    c.pop();
    c.into_iter().map(|z| z.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_examples() {
        assert!(triangle_contains(0.0, 0.0, 0.0));
        assert!(!triangle_contains(2.5, 1.0, 0.0));
        assert!(!triangle_contains(0.0, 1.0 + 1e-9, 0.0));
        for (a, b) in [(2.0, 1.0), (-2.0, 1.0), (0.0, -1.0)] {
            assert!(triangle_contains(a, b, 0.0));
            assert!(!triangle_contains(a, b, 1e-6));
        }
    }

    #[test]
    fn unit_disc_examples() {
        assert!(roots_inside_unit_disc(&[0.5, 0.0]).unwrap());
        assert!(!roots_inside_unit_disc(&[1.0, -2.5]).unwrap());
        assert!(roots_inside_unit_disc(&[0.0]).unwrap());
        assert!(roots_inside_unit_disc(&[]).is_err());
    }

    #[test]
    fn quadratic_roots_satisfy_polynomial() {
        for (a, b) in [(0.3, -0.9), (-1.9, 0.95), (1e-8, -1e-12), (0.0, 0.0), (3.0, 1.0)] {
            for z in quadratic_roots(a, b) {
                assert!((z * z + z * a + b).norm() < 1e-12, "{a} {b} {z}");
            }
        }
    }

    #[test]
    fn roots_roundtrip_degree_five() {
        let want = [
            Complex64::new(0.5, 0.2),
            Complex64::new(0.5, -0.2),
            Complex64::new(-0.7, 0.0),
            Complex64::new(0.1, 0.6),
            Complex64::new(0.1, -0.6),
        ];
        let a = monic_from_roots(&want);
        let got = monic_roots(&a).unwrap();
        for w in want {
            assert!(got.iter().any(|g| (g - w).norm() < 1e-10));
        }
    }

    #[test]
    fn poly_mul_matches_hand_expansion() {
        // (1 + z)(2 - z + z^2) = 2 + z + 0 z^2 + z^3
        assert_eq!(poly_mul(&[1.0, 1.0], &[2.0, -1.0, 1.0]), vec![2.0, 1.0, 0.0, 1.0]);
    }
}
