use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

use common::{equivalence_error, l1_gain};
use wienerrom::cascade::CascadeFilter;
use wienerrom::eval::{ancr, energy_spectrum, histogram, rmse};
use wienerrom::noise::NoiseModel;
use wienerrom::optim::{minimize, LinearConstraints, OptimizerConfig};
use wienerrom::poly::{monic_roots, quadratic_roots};
use wienerrom::{
    expand_cascade, roots_inside_unit_disc, triangle_contains, CascadeCoefficients, ComplexSeries,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Stable section coefficients drawn from root moduli below `rho`.
fn stable_coeffs(p: usize, rho: f64) -> impl Strategy<Value = CascadeCoefficients> {
    let pair = (0.0..rho, 0.0..std::f64::consts::PI, any::<bool>(), -rho..rho, -rho..rho).prop_map(
        |(r, phi, complex, x, y)| {
            if complex {
                (-2.0 * r * phi.cos(), r * r)
            } else {
                (-(x + y), x * y)
            }
        },
    );
    (proptest::collection::vec(pair, p / 2), -rho..rho).prop_map(move |(pairs, a0)| {
        CascadeCoefficients::new(pairs, (p % 2 == 1).then_some(a0), 0.0).expect("roots inside the disc")
    })
}

fn sorted_roots(mut r: Vec<Complex64>) -> Vec<Complex64> {
    r.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn triangle_membership_matches_root_moduli(alpha in -3.0f64..3.0, beta in -2.0f64..2.0) {
        let inside = triangle_contains(alpha, beta, 0.0);
        let rmax = quadratic_roots(alpha, beta).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if (rmax - 1.0).abs() > 1e-9 {
            prop_assert_eq!(inside, roots_inside_unit_disc(&[beta, alpha]).unwrap());
        }
    }

    #[test]
    fn expanded_polynomial_has_section_roots(coeffs in (1usize..7).prop_flat_map(|p| stable_coeffs(p, 0.95))) {
        let a = expand_cascade(&coeffs);
        let direct = sorted_roots(monic_roots(&a).unwrap());
        let sections = sorted_roots(coeffs.roots());
        prop_assert_eq!(direct.len(), sections.len());
        let sep = sections
            .iter()
            .enumerate()
            .flat_map(|(i, z)| sections[i + 1..].iter().map(move |w| (z - w).norm()))
            .fold(f64::INFINITY, f64::min);
        if sep > 0.05 {
            // Well separated roots are well conditioned: match them one to one.
            let mut left = direct.clone();
            for z in &sections {
                let (k, dist) = left
                    .iter()
                    .enumerate()
                    .map(|(k, w)| (k, (z - w).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                prop_assert!(dist < 1e-10, "root {z} unmatched, nearest at {dist}");
                left.swap_remove(k);
            }
        }
        // Clustered roots are ill-conditioned; there the polynomial must vanish.
        for z in &sections {
            let val = a.iter().rev().fold(c(1.0, 0.0), |acc, &x| acc * z + x);
            prop_assert!(val.norm() < 1e-9, "A({z}) = {val}");
        }
    }

    #[test]
    fn accepted_coefficients_are_stable(params in proptest::collection::vec(-2.5f64..2.5, 1..7), margin in 0.0f64..0.2) {
        let p = params.len();
        if let Ok(coeffs) = CascadeCoefficients::from_params(p, &params, margin) {
            prop_assert!(coeffs.is_stable());
            prop_assert!(roots_inside_unit_disc(&expand_cascade(&coeffs)).unwrap());
        }
    }

    #[test]
    fn cascade_is_bounded_input_bounded_output(
        coeffs in (1usize..7).prop_flat_map(|p| stable_coeffs(p, 0.9)),
        inputs in proptest::collection::vec(-1.0f64..1.0, 200),
    ) {
        let bound = l1_gain(&coeffs) * inputs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let f = CascadeFilter::new(&coeffs);
        let mut st = vec![0.0; coeffs.order()];
        for &u in &inputs {
            let y = f.step_real(&mut st, u);
            prop_assert!(y.abs() <= bound * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn cascade_is_linear(
        coeffs in (1usize..7).prop_flat_map(|p| stable_coeffs(p, 0.95)),
        u in proptest::collection::vec(-1.0f64..1.0, 60),
        v in proptest::collection::vec(-1.0f64..1.0, 60),
        s in -3.0f64..3.0,
    ) {
        let f = CascadeFilter::new(&coeffs);
        let run = |x: &[f64]| -> Vec<f64> {
            let mut st = vec![0.0; coeffs.order()];
            x.iter().map(|&xi| f.step_real(&mut st, xi)).collect()
        };
        let combo: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + s * b).collect();
        let (yu, yv, yc) = (run(&u), run(&v), run(&combo));
        for k in 0..u.len() {
            let want = yu[k] + s * yv[k];
            prop_assert!((yc[k] - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn cascade_matches_multistep_with_homogeneous_start(
        (p, coeffs) in prop_oneof![Just(2usize), Just(4), Just(6)].prop_flat_map(|p| (Just(p), stable_coeffs(p, 0.9))),
        r_frac in 0.0f64..1.0,
        d in 1usize..4,
        seed in any::<u64>(),
    ) {
        let r = ((p as f64 + 1.0) * r_frac) as usize;
        let (err, scale) = equivalence_error(p, r.min(p), d, &coeffs, seed, 500);
        prop_assert!(err <= 1e-10 * scale, "cascade and multistep differ by {err} at scale {scale}");
    }

    #[test]
    fn optimizer_trace_is_monotone_and_feasible(
        target in proptest::collection::vec(-1.0f64..1.0, 2),
        x0 in proptest::collection::vec(-0.5f64..0.5, 2),
    ) {
        // Minimize a shifted quadratic over the unit box.
        let cons = LinearConstraints {
            a: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            b: vec![0.8, 0.8, 0.8, 0.8],
        };
        let cfg = OptimizerConfig { max_evals: 150, ..OptimizerConfig::default() };
        let mut f = |x: &[f64]| (x[0] - target[0]).powi(2) + 3.0 * (x[1] - target[1]).powi(2) + 0.1;
        let res = minimize(&mut f, &x0, &cons, &[], &cfg, cfg.max_evals, 0);
        prop_assert!(res.evals <= cfg.max_evals);
        let mut prev = f64::INFINITY;
        for e in &res.trace {
            prop_assert!(e.best <= prev);
            prop_assert!(cons.feasible(&e.x));
            prev = e.best;
        }
        prop_assert!((res.value - res.trace.last().unwrap().best).abs() < 1e-15);
    }

    #[test]
    fn ancr_lies_in_unit_interval(
        truth in proptest::collection::vec(-2.0f64..2.0, 30),
        fc in proptest::collection::vec(-2.0f64..2.0, 30),
    ) {
        let series = |v: &[f64]| {
            let data: Vec<Complex64> = v.iter().map(|&x| c(x, 0.0)).collect();
            ComplexSeries::new(3, 1.0, "s", data).unwrap()
        };
        let t = vec![series(&truth[..15]), series(&truth[15..])];
        let f = vec![series(&fc[..15]), series(&fc[15..])];
        let curve = ancr(&t, &f, &[c(0.1, 0.0); 3]).unwrap();
        for v in curve.values.iter().filter(|v| v.is_finite()) {
            prop_assert!((-1.0..=1.0).contains(v));
        }
    }

    #[test]
    fn ensemble_mean_rmse_is_below_member_rms(
        members in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 20), 2..8),
        truth in proptest::collection::vec(-1.0f64..1.0, 20),
    ) {
        let series = |v: &[f64]| {
            let data: Vec<Complex64> = v.chunks(2).map(|w| c(w[0], w[1])).collect();
            ComplexSeries::new(2, 1.0, "s", data).unwrap()
        };
        let n = members.len() as f64;
        let mean: Vec<f64> = (0..20).map(|i| members.iter().map(|m| m[i]).sum::<f64>() / n).collect();
        let truth = vec![series(&truth)];
        let ens = rmse(&truth, &[series(&mean)]).unwrap();
        let per_member: Vec<_> = members.iter().map(|m| rmse(&truth, &[series(m)]).unwrap()).collect();
        for k in 0..5 {
            let rms = (per_member.iter().map(|r| r.real[k].powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(ens.real[k] <= rms + 1e-12);
        }
    }

    #[test]
    fn histogram_integrates_to_one(vals in proptest::collection::vec(-5.0f64..5.0, 50..400), bins in 10usize..40) {
        let h = histogram(&vals, bins).unwrap();
        prop_assert!((h.integral() - 1.0).abs() < 1e-12);
        prop_assert!(h.density.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn energy_spectrum_of_scaled_series_scales_quadratically(
        vals in proptest::collection::vec(-1.0f64..1.0, 80),
        s in 0.1f64..10.0,
    ) {
        let data: Vec<Complex64> = vals.chunks(2).map(|w| c(w[0], w[1])).collect();
        let u = ComplexSeries::new(2, 1.0, "u", data.clone()).unwrap();
        let v = ComplexSeries::new(2, 1.0, "v", data.iter().map(|z| z * s).collect()).unwrap();
        let (eu, ev) = (energy_spectrum(&u), energy_spectrum(&v));
        for k in 0..2 {
            prop_assert!((ev.mean[k] - s * s * eu.mean[k]).abs() <= 1e-12 * (1.0 + ev.mean[k]));
        }
    }
}

#[test]
fn white_noise_samples_have_unit_scale_and_gaussian_tails() {
    let noise = NoiseModel::white(2, 1.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = noise.sample(50_000, &mut rng).unwrap();
    let re: Vec<f64> = s.rows().map(|r| r[0].re).collect();
    let n = re.len() as f64;
    let mean = re.iter().sum::<f64>() / n;
    let var = re.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let kurt = re.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n / (var * var);
    // Complex variance sigma^2 splits evenly between the two parts.
    assert!((var - 0.125).abs() < 0.005, "variance {var}");
    assert!((kurt - 3.0).abs() < 0.1, "kurtosis {kurt}");
    // Stationarity: the two halves carry the same power.
    let half = s.len() / 2;
    let p1 = energy_spectrum(&s.slice(0, half).unwrap()).mean;
    let p2 = energy_spectrum(&s.slice(half, s.len()).unwrap()).mean;
    for k in 0..2 {
        assert!((p1[k] / p2[k] - 1.0).abs() < 0.05);
    }
}
