//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wienerrom::cascade::{filter_noise, init_from_history, multistep_run, CascadeFilter, ClosedLoop, Injection};
use wienerrom::predictors::BasisDescriptor;
use wienerrom::{expand_cascade, CascadeCoefficients, ComplexSeries, ModelOrders};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// l1 norm of the impulse response, truncated once the tail is negligible.
pub fn l1_gain(coeffs: &CascadeCoefficients) -> f64 {
    let f = CascadeFilter::new(coeffs);
    let mut st = vec![0.0; coeffs.order()];
    let mut sum = 0.0;
    for n in 0..20_000 {
        sum += f.step_real(&mut st, if n == 0 { 1.0 } else { 0.0 }).abs();
    }
    sum
}

/// Random stable cascade of degree `p` with root moduli below `rho`.
pub fn random_stable_coeffs<R: Rng>(rng: &mut R, p: usize, rho: f64) -> CascadeCoefficients {
    let pairs = (0..p / 2)
        .map(|_| {
            if rng.random_bool(0.5) {
                let r = rng.random_range(0.0..rho);
                let phi = rng.random_range(0.0..std::f64::consts::PI);
                (-2.0 * r * phi.cos(), r * r)
            } else {
                let (x, y) = (rng.random_range(-rho..rho), rng.random_range(-rho..rho));
                (-(x + y), x * y)
            }
        })
        .collect();
    let linear = (p % 2 == 1).then(|| rng.random_range(-rho..rho));
    CascadeCoefficients::new(pairs, linear, 0.0).expect("roots inside the disc")
}

/// Runs the closed loop in cascade form and the expanded multistep
/// recursion side by side, from the same history and with the noise
/// filtered by `A(q)` for the multistep side. The basis holds the linear
/// features plus one quadratic feature; the weights are scaled so the loop
/// is contractive. Returns the largest deviation and the path scale.
pub fn equivalence_error(
    p: usize,
    r: usize,
    d: usize,
    coeffs: &CascadeCoefficients,
    seed: u64,
    n_steps: usize,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut monomials: Vec<Vec<usize>> = (0..d).map(|i| vec![i]).collect();
    monomials.push(vec![0, 0]);
    let basis_desc = BasisDescriptor::Features { dim: d, lags: 1, monomials };
    let basis = basis_desc.build().unwrap();
    let m = basis_desc.predictor_dim();
    let gain = l1_gain(coeffs);
    let scale = 0.4 / (gain * (r + 1) as f64 * m as f64);
    let weights: Vec<Vec<Complex64>> = (0..=r)
        .map(|_| (0..m).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale).collect())
        .collect();
    let init_data: Vec<Complex64> =
        (0..(p + 1) * d).map(|_| c(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1))).collect();
    let init = ComplexSeries::new(d, 1.0, "init", init_data).unwrap();
    let xi_data: Vec<Complex64> =
        (0..n_steps * d).map(|_| c(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01))).collect();
    let xi = ComplexSeries::new(d, 1.0, "xi", xi_data).unwrap();
    let orders = ModelOrders::new(p, r).unwrap();
    let run = ClosedLoop { orders, coeffs, weights: &weights, basis: &basis, forcing: None, bound: None };
    let hist: Vec<&[Complex64]> = init.rows().collect();
    let state = init_from_history(coeffs, d, &hist).unwrap();
    let cascade = run.run(&init, Some(state), Injection::Series(&xi), n_steps, false).unwrap().path;
    let a = expand_cascade(coeffs);
    let filtered = filter_noise(&a, &xi);
    let direct =
        multistep_run(orders, &a, &weights, &basis, &init, Injection::Series(&filtered), n_steps, None).unwrap();
    let err = cascade.data().iter().zip(direct.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    (err, cascade.max_abs().max(1e-300))
}
