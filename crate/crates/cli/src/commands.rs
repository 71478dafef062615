use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use num_complex::Complex64;
use serde::Serialize;
use wienerrom::eval::{
    ancr, energy_spectrum, extract_pieces, histogram_range, normalized_acf, rmse, EnergySpectrum, Histogram,
};
use wienerrom::fit::{fit_linear, fit_nonlinear, FitData, FitMethod, FitReport};
use wienerrom::models::{generate_trajectory, SpectralPdeConfig};
use wienerrom::noise::{build_noise_model, NoiseModel};
use wienerrom::predictors::evaluate_series;
use wienerrom::sim::{ensemble_forecast, simulate, simulate_shared_forcing, SimOptions};
use wienerrom::spectral::{acf, power_spectrum, WelchConfig};
use wienerrom::{CascadeModel, ComplexSeries};

use crate::artifact::{write_json, FitSummary, ModelFile, ReportFile};
use crate::config::RunConfig;
use crate::dataset::{save_csv, Dataset};
use crate::provenance::{hash_value, Provenance};

pub const FORCING_BLOCK: &str = "forcing";

pub fn load_config(config: Option<&Path>, preset: Option<&str>) -> Result<RunConfig> {
    let cfg = match (config, preset) {
        (Some(_), Some(_)) => bail!("give either --config or --preset, not both"),
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => bail!("a configuration is required (--config FILE or --preset NAME)"),
    };
    if let Some(w) = &cfg.warning {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

pub struct SimulateFullArgs {
    pub steps: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub csv: Option<PathBuf>,
}

pub fn simulate_full(mut cfg: RunConfig, args: &SimulateFullArgs) -> Result<Dataset> {
    if let Some(s) = args.steps {
        ensure!(s > 0, "--steps must be positive; an empty dataset is never written");
        cfg.pde.steps = s;
    }
    if let Some(b) = args.burn_in {
        cfg.pde.burn_in = b;
    }
    if let Some(seed) = args.seed {
        cfg.pde.seed = seed;
    }
    cfg.pde.validate().context("pde")?;
    let hash = hash_value(&cfg.pde)?;
    let rec = generate_trajectory(&cfg.pde).context("full-model integration failed")?;
    let extra = rec.forcing_agg.map(|f| (FORCING_BLOCK.to_string(), f)).into_iter().collect();
    let ds = Dataset::new(
        rec.observed,
        extra,
        vec![cfg.pde.seed],
        Provenance::root(&hash),
        serde_json::json!({ "pde": cfg.pde }),
    );
    ds.save(&args.out)?;
    if let Some(csv) = &args.csv {
        save_csv(&ds.series, csv)?;
    }
    Ok(ds)
}

/// PDE configuration recorded in a dataset header, if any.
fn dataset_pde(ds: &Dataset) -> Result<SpectralPdeConfig> {
    let v = ds.header.source.get("pde").context("dataset does not record the PDE it came from")?;
    serde_json::from_value(v.clone()).context("dataset PDE record")
}

pub struct FitArgs {
    pub method: Option<FitMethod>,
    pub p: Option<usize>,
    pub r: Option<usize>,
    pub max_evals: Option<usize>,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
}

pub struct FitOutcome {
    pub report: FitReport,
    pub noise: Option<NoiseModel>,
    pub file: ModelFile,
}

fn apply_fit_overrides(cfg: &mut RunConfig, method: Option<FitMethod>, p: Option<usize>, r: Option<usize>) {
    if let Some(m) = method {
        cfg.fit.method = m;
    }
    if let Some(p) = p {
        cfg.fit.p = p;
    }
    if let Some(r) = r {
        cfg.fit.r = r;
    }
}

/// Fits one model to a dataset with the orders in `cfg.fit`.
pub fn fit_dataset(cfg: &RunConfig, ds: &Dataset) -> Result<FitOutcome> {
    cfg.validate()?;
    let mut pde_cfg = cfg.clone();
    pde_cfg.pde = dataset_pde(ds)?;
    let basis_desc = pde_cfg.basis();
    ensure!(
        basis_desc.state_dim() == ds.series.dim(),
        "basis expects {} modes, the dataset has {}",
        basis_desc.state_dim(),
        ds.series.dim()
    );
    let skip = cfg.fit.skip;
    ensure!(skip < ds.series.len(), "fit.skip = {skip} leaves no data");
    let x = ds.series.slice(skip, ds.series.len())?;
    let forcing = if cfg.fit.forcing_leads > 0 {
        let f = ds.block(FORCING_BLOCK).context("fit.forcing_leads > 0 but the dataset has no forcing block")?;
        Some(f.slice(skip, f.len())?)
    } else {
        None
    };
    let basis = basis_desc.build()?;
    let psi = evaluate_series(&basis, &x)?;
    let mut data = FitData::new(&psi, &x);
    if let Some(f) = &forcing {
        data = data.with_forcing(f);
    }
    let fit_cfg = cfg.fit_config();
    let report = match cfg.fit.method {
        FitMethod::Nonlinear => fit_nonlinear(&data, &fit_cfg)?,
        FitMethod::Linear => fit_linear(&data, &fit_cfg)?,
    };
    let noise = match build_noise_model(&report.residuals, &cfg.noise_config()) {
        Ok(n) => Some(n),
        Err(e) => {
            eprintln!("warning: no noise model stored: {e}");
            None
        }
    };
    let fit_hash = hash_value(&(&cfg.fit, &cfg.noise))?;
    let prov = Provenance::derived(&fit_hash, &[&ds.header.provenance]);
    let file = ModelFile::new(&report.model, noise.as_ref(), FitSummary::from_report(&report), prov);
    Ok(FitOutcome { report, noise, file })
}

pub fn fit(mut cfg: RunConfig, ds: &Dataset, args: &FitArgs) -> Result<FitOutcome> {
    apply_fit_overrides(&mut cfg, args.method, args.p, args.r);
    if let Some(m) = args.max_evals {
        cfg.fit.max_evals = m;
    }
    let out = fit_dataset(&cfg, ds)?;
    out.file.save(&args.out)?;
    let report_path = args.report.clone().unwrap_or_else(|| sibling(&args.out, "report.json"));
    write_json(&ReportFile::new(&out.report, out.file.provenance.clone()), &report_path)?;
    let s = &out.file.fit;
    if !s.converged {
        eprintln!("warning: the optimizer did not converge within its budget; the model is written but flagged");
    }
    if !s.stable {
        eprintln!("warning: the fitted A(z) has roots on or outside the unit circle; the model is flagged unstable");
    }
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    Ok(out)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Parses `p=1..4 r=0..p` (inclusive ranges; `r` may end at `p`).
pub fn parse_sweep(spec: &str) -> Result<Vec<(usize, usize)>> {
    let mut p_range = None;
    let mut r_range: Option<(usize, Option<usize>)> = None;
    for tok in spec.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
        let (key, val) = tok.split_once('=').with_context(|| format!("sweep term {tok:?} is not key=range"))?;
        let (lo, hi) = val.split_once("..").unwrap_or((val, val));
        let lo: usize = lo.parse().with_context(|| format!("bad lower bound in {tok:?}"))?;
        match key {
            "p" => {
                let hi: usize = hi.parse().with_context(|| format!("bad upper bound in {tok:?}"))?;
                p_range = Some((lo, hi));
            }
            "r" => {
                let hi = if hi == "p" { None } else { Some(hi.parse().with_context(|| format!("bad bound in {tok:?}"))?) };
                r_range = Some((lo, hi));
            }
            _ => bail!("unknown sweep key {key:?} (expected p or r)"),
        }
    }
    let (p0, p1) = p_range.context("sweep needs a p range")?;
    let (r0, r1) = r_range.unwrap_or((0, None));
    ensure!(p0 <= p1, "empty p range");
    let mut pairs = Vec::new();
    for p in p0..=p1 {
        let hi = r1.unwrap_or(p).min(p);
        for r in r0..=hi {
            pairs.push((p, r));
        }
    }
    ensure!(!pairs.is_empty(), "sweep selects no (p, r) pairs with r <= p");
    Ok(pairs)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub p: usize,
    pub r: usize,
    pub mse: f64,
    pub relative_mse: f64,
    pub converged: bool,
    pub stable: bool,
    pub bounded: bool,
    pub note: String,
}

/// Fits every pair and checks that a free run of `check_steps` stays bounded.
pub fn sweep(cfg: &RunConfig, ds: &Dataset, pairs: &[(usize, usize)], check_steps: usize, out: &Path) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &(p, r) in pairs {
        let mut c = cfg.clone();
        c.fit.p = p;
        c.fit.r = r;
        let row = match fit_dataset(&c, ds) {
            Ok(o) => {
                let s = &o.file.fit;
                let (bounded, note) = match free_run(&o.report.model, o.noise.as_ref(), ds, check_steps, cfg.simulate.seed, cfg) {
                    Ok(_) => (true, String::new()),
                    Err(e) => (false, e.to_string()),
                };
                SweepRow { p, r, mse: s.mse, relative_mse: s.relative_mse, converged: s.converged, stable: s.stable, bounded, note }
            }
            Err(e) => SweepRow {
                p,
                r,
                mse: f64::NAN,
                relative_mse: f64::NAN,
                converged: false,
                stable: false,
                bounded: false,
                note: format!("{e:#}"),
            },
        };
        eprintln!(
            "p={} r={} E'={:.4e} (relative {:.4e}) converged={} stable={} bounded={}",
            row.p, row.r, row.mse, row.relative_mse, row.converged, row.stable, row.bounded
        );
        rows.push(row);
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?);
    writeln!(f, "p,r,mse,relative_mse,converged,stable,bounded,note")?;
    for r in &rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},\"{}\"",
            r.p,
            r.r,
            r.mse,
            r.relative_mse,
            r.converged,
            r.stable,
            r.bounded,
            r.note.replace('"', "'")
        )?;
    }
    f.flush()?;
    Ok(rows)
}

fn free_run(
    model: &CascadeModel,
    noise: Option<&NoiseModel>,
    ds: &Dataset,
    steps: usize,
    seed: u64,
    cfg: &RunConfig,
) -> Result<ComplexSeries> {
    let opts = SimOptions { blowup_factor: cfg.simulate.blowup_factor };
    let init_len = model.init_len();
    ensure!(ds.series.len() >= init_len, "dataset is shorter than the initial segment ({init_len})");
    let init = ds.series.slice(0, init_len)?;
    match &model.forcing {
        Some(_) => {
            let f = ds.block(FORCING_BLOCK).context("forced model needs the dataset forcing block")?;
            Ok(simulate_shared_forcing(model, noise, &init, f, steps, seed, &opts)?)
        }
        None => Ok(simulate(model, noise, &init, steps, seed, &opts)?),
    }
}

pub struct SimulateReducedArgs {
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub start: usize,
    pub no_noise: bool,
    pub out: PathBuf,
    pub csv: Option<PathBuf>,
}

pub fn simulate_reduced(cfg: &RunConfig, mf: &ModelFile, ds: &Dataset, args: &SimulateReducedArgs) -> Result<Dataset> {
    let model = mf.model()?;
    let noise = if args.no_noise { None } else { mf.noise_model()? };
    if !args.no_noise && noise.is_none() {
        bail!("the model file has no noise model; pass --no-noise for a deterministic run");
    }
    let steps = args.steps.unwrap_or(cfg.simulate.steps);
    ensure!(steps > 0, "--steps must be positive");
    let seed = args.seed.unwrap_or(cfg.simulate.seed);
    let opts = SimOptions { blowup_factor: cfg.simulate.blowup_factor };
    let need = model.init_len();
    ensure!(
        ds.series.len() >= args.start + need,
        "dataset has {} rows; the initial segment needs rows {}..{}",
        ds.series.len(),
        args.start,
        args.start + need
    );
    ensure!(ds.series.dim() == model.state_dim, "dataset dimension {} differs from the model's {}", ds.series.dim(), model.state_dim);
    let init = ds.series.slice(args.start, args.start + need)?;
    let path = match &model.forcing {
        Some(_) => {
            let f = ds.block(FORCING_BLOCK).context("forced model needs the dataset forcing block")?;
            let f = f.slice(args.start, f.len())?;
            simulate_shared_forcing(&model, noise.as_ref(), &init, &f, steps, seed, &opts)?
        }
        None => simulate(&model, noise.as_ref(), &init, steps, seed, &opts)?,
    };
    let run_hash = hash_value(&serde_json::json!({
        "steps": steps, "seed": seed, "start": args.start, "no_noise": args.no_noise,
        "blowup_factor": opts.blowup_factor,
    }))?;
    let prov = Provenance::derived(&run_hash, &[&mf.provenance, &ds.header.provenance]);
    let mut series = path;
    series.set_label("reduced");
    let mut source = ds.header.source.clone();
    if let Some(obj) = source.as_object_mut() {
        obj.insert("reduced_run".into(), serde_json::json!({ "steps": steps, "seed": seed, "start": args.start }));
    }
    let out = Dataset::new(series, Vec::new(), vec![seed], prov, source);
    out.save(&args.out)?;
    if let Some(csv) = &args.csv {
        save_csv(&out.series, csv)?;
    }
    Ok(out)
}

pub struct ForecastArgs {
    pub ens: Option<usize>,
    pub horizon: Option<usize>,
    pub pieces: Option<usize>,
    pub spacing: Option<usize>,
    pub first: Option<usize>,
    pub seed: Option<u64>,
    pub no_noise: bool,
    pub members: bool,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastSummary {
    pub provenance: Provenance,
    pub ensemble: usize,
    pub horizon: usize,
    pub pieces: usize,
    pub dt: f64,
    pub climatological_rmse: f64,
    pub rmse_real: Vec<f64>,
    pub rmse_imag: Vec<f64>,
    pub ancr: Vec<f64>,
}

pub fn forecast(cfg: &RunConfig, mf: &ModelFile, ds: &Dataset, args: &ForecastArgs) -> Result<ForecastSummary> {
    let fc = &cfg.forecast;
    let n_ens = args.ens.unwrap_or(fc.ensemble);
    let horizon = args.horizon.unwrap_or(fc.horizon);
    let count = args.pieces.unwrap_or(fc.pieces);
    let spacing = args.spacing.unwrap_or(fc.spacing);
    let first = args.first.unwrap_or(fc.first);
    let seed = args.seed.unwrap_or(fc.seed);
    ensure!(n_ens > 0, "--ens must be positive");
    let model = mf.model()?;
    let noise = if args.no_noise { None } else { mf.noise_model()? };
    if !args.no_noise && noise.is_none() {
        bail!("the model file has no noise model; pass --no-noise for deterministic forecasts");
    }
    let x = &ds.series;
    ensure!(x.dim() == model.state_dim, "dataset dimension {} differs from the model's {}", x.dim(), model.state_dim);
    let init_len = model.init_len();
    let pieces = extract_pieces(x, first, spacing, count, init_len, horizon)?;
    let opts = SimOptions { blowup_factor: cfg.simulate.blowup_factor };
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut bands = csv_file(&args.out_dir.join("bands.csv"))?;
    writeln!(bands, "piece,lead,t,component,truth_re,mean_re,q05_re,q95_re,truth_im,mean_im,q05_im,q95_im")?;
    let mut members = if args.members { Some(csv_file(&args.out_dir.join("members.csv"))?) } else { None };
    if let Some(m) = members.as_mut() {
        writeln!(m, "piece,member,lead,component,re,im")?;
    }
    let forcing = ds.block(FORCING_BLOCK);
    let mut truths = Vec::with_capacity(pieces.len());
    let mut means = Vec::with_capacity(pieces.len());
    for (i, piece) in pieces.iter().enumerate() {
        let f = match (&model.forcing, forcing) {
            (Some(_), Some(f)) => Some(f.slice(piece.start, f.len())?),
            (Some(_), None) => bail!("forced model needs the dataset forcing block"),
            _ => None,
        };
        let piece_seed = seed.wrapping_add(i as u64 * 1_000_003);
        let ens = ensemble_forecast(&model, noise.as_ref(), &piece.init, f.as_ref(), n_ens, horizon, piece_seed, &opts)
            .with_context(|| format!("forecast piece {i} starting at row {}", piece.start))?;
        for n in 0..horizon {
            for k in 0..x.dim() {
                let (t, m, lo, hi) = (piece.truth.row(n)[k], ens.mean.row(n)[k], ens.q05.row(n)[k], ens.q95.row(n)[k]);
                writeln!(
                    bands,
                    "{i},{},{},{},{},{},{},{},{},{},{},{}",
                    n + 1,
                    (n + 1) as f64 * x.dt(),
                    k + 1,
                    t.re,
                    m.re,
                    lo.re,
                    hi.re,
                    t.im,
                    m.im,
                    lo.im,
                    hi.im
                )?;
            }
        }
        if let Some(w) = members.as_mut() {
            for (j, mem) in ens.members.iter().enumerate() {
                for (n, row) in mem.rows().enumerate() {
                    for (k, z) in row.iter().enumerate() {
                        writeln!(w, "{i},{j},{},{},{},{}", n + 1, k + 1, z.re, z.im)?;
                    }
                }
            }
        }
        truths.push(piece.truth.clone());
        means.push(ens.mean);
    }
    bands.flush()?;
    if let Some(mut w) = members {
        w.flush()?;
    }
    let clim = x.mean();
    let curves = rmse(&truths, &means)?;
    let an = ancr(&truths, &means, &clim)?;
    let clim_rmse =
        (x.rows().map(|r| r.iter().zip(&clim).map(|(a, b)| (a.re - b.re).powi(2)).sum::<f64>()).sum::<f64>()
            / x.len() as f64)
            .sqrt();
    let mut skill = csv_file(&args.out_dir.join("skill.csv"))?;
    writeln!(skill, "lead,t,rmse_re,rmse_im,ancr,climatological_rmse")?;
    for n in 0..horizon {
        writeln!(
            skill,
            "{},{},{},{},{},{}",
            n + 1,
            (n + 1) as f64 * x.dt(),
            curves.real[n],
            curves.imag[n],
            an.values[n],
            clim_rmse
        )?;
    }
    skill.flush()?;
    let run_hash = hash_value(&serde_json::json!({
        "ens": n_ens, "horizon": horizon, "pieces": count, "spacing": spacing, "first": first,
        "seed": seed, "no_noise": args.no_noise,
    }))?;
    let summary = ForecastSummary {
        provenance: Provenance::derived(&run_hash, &[&mf.provenance, &ds.header.provenance]),
        ensemble: n_ens,
        horizon,
        pieces: count,
        dt: x.dt(),
        climatological_rmse: clim_rmse,
        rmse_real: curves.real,
        rmse_imag: curves.imag,
        ancr: an.values,
    };
    write_json(&summary, &args.out_dir.join("summary.json"))?;
    Ok(summary)
}

fn csv_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    Acf,
    Ccf,
    Marginal,
    Spectrum,
    Powerspec,
}

pub struct StatsArgs {
    pub which: Vec<Stat>,
    pub max_lag: usize,
    pub bins: usize,
    pub segment: usize,
    pub force: bool,
    pub out_dir: PathBuf,
}

/// Largest absolute discrepancy per statistic, `A` against `B`.
#[derive(Debug, Clone, Serialize)]
pub struct StatsSummary {
    pub a: Provenance,
    pub b: Provenance,
    pub forced: bool,
    pub defects: Vec<(Stat, f64)>,
}

pub fn stats(a: &Dataset, b: &Dataset, args: &StatsArgs) -> Result<StatsSummary> {
    let (u, v) = (&a.series, &b.series);
    if u.dim() != v.dim() || (u.dt() - v.dt()).abs() > 1e-12 * u.dt() {
        bail!(
            "incompatible runs: A has d={} dt={} N={}, B has d={} dt={} N={}",
            u.dim(),
            u.dt(),
            u.len(),
            v.dim(),
            v.dt(),
            v.len()
        );
    }
    let (pa, pb) = (&a.header.provenance, &b.header.provenance);
    if pa.root_hash() != pb.root_hash() {
        if !args.force {
            bail!(
                "runs descend from different root configurations ({} vs {}); pass --force to compare anyway",
                short(pa.root_hash()),
                short(pb.root_hash())
            );
        }
        eprintln!("warning: comparing runs of mixed provenance (--force)");
    }
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut defects = Vec::new();
    for &s in &args.which {
        let d = match s {
            Stat::Spectrum => stat_spectrum(u, v, &args.out_dir)?,
            Stat::Acf => stat_acf(u, v, args.max_lag, &args.out_dir)?,
            Stat::Ccf => stat_ccf(u, v, args.max_lag, &args.out_dir)?,
            Stat::Marginal => stat_marginal(u, v, args.bins, &args.out_dir)?,
            Stat::Powerspec => stat_powerspec(u, v, args.segment, &args.out_dir)?,
        };
        defects.push((s, d));
    }
    let summary = StatsSummary { a: pa.clone(), b: pb.clone(), forced: args.force, defects };
    write_json(&summary, &args.out_dir.join("stats.json"))?;
    Ok(summary)
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

fn stat_spectrum(u: &ComplexSeries, v: &ComplexSeries, dir: &Path) -> Result<f64> {
    let (ea, eb): (EnergySpectrum, EnergySpectrum) = (energy_spectrum(u), energy_spectrum(v));
    let mis = eb.relative_mismatch(&ea);
    let mut w = csv_file(&dir.join("spectrum.csv"))?;
    writeln!(w, "mode,a_mean,a_stderr,b_mean,b_stderr,relative_mismatch")?;
    for k in 0..ea.mean.len() {
        writeln!(w, "{},{},{},{},{},{}", k + 1, ea.mean[k], ea.stderr[k], eb.mean[k], eb.stderr[k], mis[k])?;
    }
    w.flush()?;
    Ok(mis.iter().copied().fold(0.0, f64::max))
}

fn stat_acf(u: &ComplexSeries, v: &ComplexSeries, max_lag: usize, dir: &Path) -> Result<f64> {
    let lag = max_lag.min(u.len().min(v.len()).saturating_sub(1));
    let mut w = csv_file(&dir.join("acf.csv"))?;
    writeln!(w, "component,lag,t,a,b")?;
    let mut worst: f64 = 0.0;
    for k in 0..u.dim() {
        let (a, b) = (normalized_acf(u, k, lag)?, normalized_acf(v, k, lag)?);
        for h in 0..=lag {
            writeln!(w, "{},{h},{},{},{}", k + 1, h as f64 * u.dt(), a[h], b[h])?;
            worst = worst.max((a[h] - b[h]).abs());
        }
    }
    w.flush()?;
    Ok(worst)
}

fn energies(u: &ComplexSeries) -> Result<ComplexSeries> {
    let data = u.data().iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect();
    Ok(ComplexSeries::new(u.dim(), u.dt(), "energy", data)?)
}

/// Cross-covariances of the mode energies `|u_k|^2`, normalized by their
/// zero-lag standard deviations.
fn stat_ccf(u: &ComplexSeries, v: &ComplexSeries, max_lag: usize, dir: &Path) -> Result<f64> {
    let lag = max_lag.min(u.len().min(v.len()).saturating_sub(1));
    let (ca, cb) = (acf(&energies(u)?, lag)?, acf(&energies(v)?, lag)?);
    let d = u.dim();
    let norm = |c: &[nalgebra::DMatrix<Complex64>], h: usize, i: usize, j: usize| {
        let s = (c[0][(i, i)].re * c[0][(j, j)].re).sqrt();
        if s > 0.0 { c[h][(i, j)].re / s } else { 0.0 }
    };
    let mut w = csv_file(&dir.join("ccf.csv"))?;
    writeln!(w, "k,l,lag,t,a,b")?;
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            for h in 0..=lag {
                let (a, b) = (norm(&ca, h, i, j), norm(&cb, h, i, j));
                writeln!(w, "{},{},{h},{},{a},{b}", i + 1, j + 1, h as f64 * u.dt())?;
                worst = worst.max((a - b).abs());
            }
        }
    }
    w.flush()?;
    Ok(worst)
}

fn stat_marginal(u: &ComplexSeries, v: &ComplexSeries, bins: usize, dir: &Path) -> Result<f64> {
    ensure!(bins >= 10, "--bins must be at least 10");
    let mut w = csv_file(&dir.join("marginal.csv"))?;
    writeln!(w, "component,center,a_density,a_stderr,b_density,b_stderr")?;
    let mut worst: f64 = 0.0;
    for k in 0..u.dim() {
        let xa: Vec<f64> = u.rows().map(|r| r[k].re).collect();
        let xb: Vec<f64> = v.rows().map(|r| r[k].re).collect();
        let lo = xa.iter().chain(&xb).copied().fold(f64::INFINITY, f64::min);
        let hi = xa.iter().chain(&xb).copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let (ha, hb): (Histogram, Histogram) = (histogram_range(&xa, lo, hi, bins)?, histogram_range(&xb, lo, hi, bins)?);
        for (i, c) in ha.centers().iter().enumerate() {
            writeln!(w, "{},{c},{},{},{},{}", k + 1, ha.density[i], ha.stderr[i], hb.density[i], hb.stderr[i])?;
            worst = worst.max((ha.density[i] - hb.density[i]).abs());
        }
    }
    w.flush()?;
    Ok(worst)
}

fn stat_powerspec(u: &ComplexSeries, v: &ComplexSeries, segment: usize, dir: &Path) -> Result<f64> {
    let welch = WelchConfig::with_segment_len(segment);
    let (sa, sb) = (power_spectrum(u, &welch)?, power_spectrum(v, &welch)?);
    let mut w = csv_file(&dir.join("powerspec.csv"))?;
    writeln!(w, "component,theta,a,b")?;
    let mut worst: f64 = 0.0;
    for k in 0..u.dim() {
        for (j, &theta) in sa.freqs.iter().enumerate() {
            let (a, b) = (sa.values[j][(k, k)].re, sb.values[j][(k, k)].re);
            writeln!(w, "{},{theta},{a},{b}", k + 1)?;
            worst = worst.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
        }
    }
    w.flush()?;
    Ok(worst)
}
