//! Running fitted reduced models: free runs driven by sampled noise, runs
//! sharing a recorded forcing with the full model, and ensemble forecasts.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{ClosedLoop, ForcingInput, Injection, DEFAULT_BLOWUP_FACTOR};
use crate::error::{invalid, Result};
use crate::model::CascadeModel;
use crate::models::stream_rng;
use crate::noise::NoiseModel;
use crate::predictors::Basis;
use crate::series::ComplexSeries;

/// Stream offset separating ensemble member noise from other uses of a seed.
const MEMBER_STREAM_BASE: u64 = 1 << 20;

/// Options shared by the runners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Runs abort when `|x|` exceeds this multiple of the largest initial
    /// magnitude.
    pub blowup_factor: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { blowup_factor: DEFAULT_BLOWUP_FACTOR }
    }
}

fn check_noise(model: &CascadeModel, noise: Option<&NoiseModel>) -> Result<()> {
    if let Some(n) = noise {
        if n.dim != model.state_dim {
            return invalid(format!("noise model has dimension {}, the model {}", n.dim, model.state_dim));
        }
    }
    Ok(())
}

fn run_with(
    model: &CascadeModel,
    basis: &Basis,
    noise_path: Option<&ComplexSeries>,
    init: &ComplexSeries,
    forcing: Option<&ComplexSeries>,
    n_steps: usize,
    opts: &SimOptions,
) -> Result<ComplexSeries> {
    let scale = init.max_abs().max(f64::MIN_POSITIVE);
    let forcing = match (&model.forcing, forcing) {
        (Some(fw), Some(series)) => Some(ForcingInput { leads: &fw.leads, series }),
        (Some(_), None) => return invalid("the model has forcing weights but no forcing series was supplied"),
        (None, Some(_)) => return invalid("a forcing series was supplied to a model without forcing weights"),
        (None, None) => None,
    };
    let run = ClosedLoop {
        orders: model.orders,
        coeffs: &model.cascade,
        weights: &model.weights,
        basis,
        forcing,
        bound: Some(opts.blowup_factor * scale),
    };
    let noise = noise_path.map_or(Injection::None, Injection::Series);
    Ok(run.run(init, None, noise, n_steps, false)?.path)
}

/// Free run of `n_steps` states after the initial segment, with noise
/// sampled from `noise` (none when `None`). The cascade state is
/// initialized from the last observations of `init`.
pub fn simulate(
    model: &CascadeModel,
    noise: Option<&NoiseModel>,
    init: &ComplexSeries,
    n_steps: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<ComplexSeries> {
    check_noise(model, noise)?;
    let basis = model.basis.build()?;
    let path = match noise {
        Some(n) => Some(n.sample(n_steps.max(1), &mut stream_rng(seed, 0))?),
        None => None,
    };
    run_with(model, &basis, path.as_ref(), init, None, n_steps, opts)
}

/// Like [`simulate`], but the stage-one input also receives the forcing
/// term `sum_i c_i w[t + i]` from the recorded aggregates. `forcing` shares
/// the time axis of `init` (row 0 is aligned with `init.row(0)`).
pub fn simulate_shared_forcing(
    model: &CascadeModel,
    noise: Option<&NoiseModel>,
    init: &ComplexSeries,
    forcing: &ComplexSeries,
    n_steps: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<ComplexSeries> {
    check_noise(model, noise)?;
    let Some(fw) = &model.forcing else {
        return invalid("the model has no forcing weights");
    };
    let need = init.len() - 1 + n_steps + fw.leads.len() - 1;
    if forcing.len() < need {
        return invalid(format!("forcing series has {} rows, the run needs {need}", forcing.len()));
    }
    let basis = model.basis.build()?;
    let path = match noise {
        Some(n) => Some(n.sample(n_steps.max(1), &mut stream_rng(seed, 0))?),
        None => None,
    };
    run_with(model, &basis, path.as_ref(), init, Some(forcing), n_steps, opts)
}

/// Ensemble forecast with per-component statistics. Quantiles are taken
/// separately for the real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<ComplexSeries>,
    pub mean: ComplexSeries,
    pub q05: ComplexSeries,
    pub q95: ComplexSeries,
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

/// Runs `n_ens` members from the same initial segment, each with its own
/// noise stream, and summarizes them.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_forecast(
    model: &CascadeModel,
    noise: Option<&NoiseModel>,
    init: &ComplexSeries,
    forcing: Option<&ComplexSeries>,
    n_ens: usize,
    horizon: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<Ensemble> {
    if n_ens == 0 {
        return invalid("an ensemble needs at least one member");
    }
    if horizon == 0 {
        return invalid("forecast horizon must be positive");
    }
    check_noise(model, noise)?;
    let basis = model.basis.build()?;
    let members: Vec<ComplexSeries> = (0..n_ens)
        .into_par_iter()
        .map(|k| {
            let path = match noise {
                Some(n) => Some(n.sample(horizon, &mut stream_rng(seed, MEMBER_STREAM_BASE + k as u64))?),
                None => None,
            };
            run_with(model, &basis, path.as_ref(), init, forcing, horizon, opts)
        })
        .collect::<Result<_>>()?;
    summarize(members)
}

/// Mean and 5th/95th percentile bands of equally long member paths.
pub fn summarize(members: Vec<ComplexSeries>) -> Result<Ensemble> {
    let Some(first) = members.first() else {
        return invalid("no ensemble members");
    };
    let (len, d, dt) = (first.len(), first.dim(), first.dt());
    if members.iter().any(|m| m.len() != len || m.dim() != d) {
        return invalid("ensemble members differ in shape");
    }
    let n = members.len() as f64;
    let total = len * d;
    let mut mean = Vec::with_capacity(total);
    let mut q05 = Vec::with_capacity(total);
    let mut q95 = Vec::with_capacity(total);
    let mut re = Vec::with_capacity(members.len());
    let mut im = Vec::with_capacity(members.len());
    for i in 0..total {
        re.clear();
        im.clear();
        for m in &members {
            let z = m.data()[i];
            re.push(z.re);
            im.push(z.im);
        }
        mean.push(Complex64::new(re.iter().sum::<f64>() / n, im.iter().sum::<f64>() / n));
        re.sort_by(f64::total_cmp);
        im.sort_by(f64::total_cmp);
        q05.push(Complex64::new(quantile_sorted(&re, 0.05), quantile_sorted(&im, 0.05)));
        q95.push(Complex64::new(quantile_sorted(&re, 0.95), quantile_sorted(&im, 0.95)));
    }
    Ok(Ensemble {
        mean: ComplexSeries::new(d, dt, "ensemble-mean", mean)?,
        q05: ComplexSeries::new(d, dt, "ensemble-q05", q05)?,
        q95: ComplexSeries::new(d, dt, "ensemble-q95", q95)?,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CascadeCoefficients, ForcingWeights, ModelOrders, DEFAULT_MARGIN};
    use crate::predictors::BasisDescriptor;

    const Z: Complex64 = Complex64::new(0.0, 0.0);

    fn model(p_pairs: Vec<(f64, f64)>, w: f64, forcing: Option<ForcingWeights>) -> CascadeModel {
        let c = CascadeCoefficients::new(p_pairs, None, DEFAULT_MARGIN).unwrap();
        let p = c.order();
        CascadeModel::new(
            ModelOrders::new(p, 0).unwrap(),
            c,
            vec![vec![Complex64::new(w, 0.0)]],
            forcing,
            BasisDescriptor::Diagonal { dim: 1 },
        )
        .unwrap()
    }

    fn init(n: usize) -> ComplexSeries {
        ComplexSeries::new(1, 1.0, "init", (0..n).map(|t| Complex64::new(1.0 + t as f64, 0.5)).collect()).unwrap()
    }

    #[test]
    fn noise_free_zero_weight_run_decays() {
        let m = model(vec![(0.5, 0.3)], 0.0, None);
        let out = simulate(&m, None, &init(3), 400, 0, &SimOptions::default()).unwrap();
        assert!(out.row(399)[0].norm() < 1e-10);
    }

    #[test]
    fn zero_noise_ensemble_has_zero_width() {
        let m = model(vec![(0.2, 0.1)], 0.3, None);
        let e = ensemble_forecast(&m, None, &init(3), None, 5, 50, 1, &SimOptions::default()).unwrap();
        assert_eq!(e.q05.data(), e.q95.data());
        assert!(e.members.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn pure_noise_band_matches_gaussian_quantile() {
        let sigma = 0.7;
        let m = model(vec![(0.0, 0.0)], 0.0, None);
        let noise = NoiseModel::white(1, 1.0, sigma).unwrap();
        let e = ensemble_forecast(&m, Some(&noise), &init(3), None, 4000, 20, 3, &SimOptions::default()).unwrap();
        // Real part has variance sigma^2 / 2.
        let half = 1.6449 * sigma / 2f64.sqrt();
        for t in 2..20 {
            let w = (e.q95.row(t)[0].re - e.q05.row(t)[0].re) / 2.0;
            assert!((w - half).abs() < 0.06 * half, "t={t} {w} {half}");
        }
    }

    #[test]
    fn zero_forcing_weights_match_plain_simulation() {
        let f = ForcingWeights { leads: vec![vec![Z]] };
        let forced = model(vec![(0.3, 0.2)], 0.4, Some(f));
        let plain = model(vec![(0.3, 0.2)], 0.4, None);
        let noise = NoiseModel::white(1, 1.0, 0.1).unwrap();
        let w = ComplexSeries::new(1, 1.0, "w", vec![Complex64::new(1.0, 0.0); 200]).unwrap();
        let a = simulate_shared_forcing(&forced, Some(&noise), &init(3), &w, 100, 7, &SimOptions::default()).unwrap();
        let b = simulate(&plain, Some(&noise), &init(3), 100, 7, &SimOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forcing_too_short_is_rejected() {
        let f = ForcingWeights { leads: vec![vec![Complex64::new(1.0, 0.0)]] };
        let m = model(vec![(0.3, 0.2)], 0.4, Some(f));
        let w = ComplexSeries::new(1, 1.0, "w", vec![Z; 20]).unwrap();
        assert!(simulate_shared_forcing(&m, None, &init(3), &w, 100, 0, &SimOptions::default()).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let m = model(vec![(0.3, 0.2)], 0.4, None);
        let noise = NoiseModel::white(1, 1.0, 0.1).unwrap();
        let a = simulate(&m, Some(&noise), &init(3), 100, 11, &SimOptions::default()).unwrap();
        let b = simulate(&m, Some(&noise), &init(3), 100, 11, &SimOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantiles_interpolate() {
        assert_eq!(quantile_sorted(&[1.0], 0.3), 1.0);
        assert!((quantile_sorted(&[0.0, 1.0, 2.0], 0.25) - 0.5).abs() < 1e-15);
    }
}
