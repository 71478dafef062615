//! Command-line pipeline: simulate the full model, fit a reduced model,
//! run and forecast it, and compare statistics.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod provenance;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use wienerrom::fit::FitMethod;

use crate::artifact::ModelFile;
use crate::commands::Stat;
use crate::config::RunConfig;
use crate::dataset::Dataset;

#[derive(Debug, Parser)]
#[command(name = "wienerrom", version, about = "Data-driven reduced models of spectral PDEs")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "WIENERROM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in configuration: ks-desk, ks-paper, burgers-desk, burgers-paper.
    #[arg(long)]
    pub preset: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        commands::load_config(self.config.as_deref(), self.preset.as_deref())
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum MethodArg {
    Nonlinear,
    Linear,
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Nonlinear => FitMethod::Nonlinear,
            MethodArg::Linear => FitMethod::Linear,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the full PDE and write the observed modes.
    SimulateFull {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Recorded integrator steps (overrides the config).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long, env = "WIENERROM_SEED")]
        seed: Option<u64>,
        /// Also write the observations as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fit a reduced model to a dataset.
    Fit {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        max_evals: Option<usize>,
        /// Report path (defaults to `<out stem>.report.json`).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Run an order sweep instead, e.g. "p=1..4 r=0..p"; `--out` receives the table.
        #[arg(long)]
        sweep: Option<String>,
        /// Free-run length used by the sweep's boundedness check.
        #[arg(long, default_value_t = 10_000)]
        check_steps: usize,
    },
    /// Order sweep: fit every (p, r) pair and tabulate E' and boundedness.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Pairs to fit, e.g. "p=1..4 r=0..p".
        #[arg(long, default_value = "p=1..4 r=0..p")]
        orders: String,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, default_value_t = 10_000)]
        check_steps: usize,
        /// CSV table.
        #[arg(long)]
        out: PathBuf,
    },
    /// Free run of a fitted model from an initial segment of a dataset.
    SimulateReduced {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, env = "WIENERROM_SEED")]
        seed: Option<u64>,
        /// Row of the dataset where the initial segment starts.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Run without sampled noise.
        #[arg(long)]
        no_noise: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Ensemble forecasts from pieces of a dataset, with skill scores.
    Forecast {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        ens: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        pieces: Option<usize>,
        #[arg(long)]
        spacing: Option<usize>,
        #[arg(long)]
        first: Option<usize>,
        #[arg(long, env = "WIENERROM_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        no_noise: bool,
        /// Also write every member path.
        #[arg(long)]
        members: bool,
    },
    /// Compare statistics of two runs.
    Stats {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "spectrum,acf,ccf,marginal,powerspec")]
        which: Vec<Stat>,
        #[arg(long, default_value_t = 100)]
        max_lag: usize,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Welch segment length for `powerspec`.
        #[arg(long, default_value_t = 256)]
        segment: usize,
        /// Compare runs that descend from different root configurations.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Config for commands where it only supplies defaults.
fn optional_config(cfg: &ConfigArgs, ds: &Dataset) -> Result<RunConfig> {
    if cfg.config.is_some() || cfg.preset.is_some() {
        return cfg.load();
    }
    // Fall back to the defaults around the PDE recorded in the dataset.
    let pde = ds.header.source.get("pde").context("no --config given and the dataset records no PDE")?;
    let text = format!("[pde]\n{}", toml::to_string(pde).context("re-encoding the dataset PDE record")?);
    RunConfig::parse(&text)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::SimulateFull { cfg, out, steps, burn_in, seed, csv } => {
            let cfg = cfg.load()?;
            let ds = commands::simulate_full(cfg, &commands::SimulateFullArgs { steps, burn_in, seed, out: out.clone(), csv })?;
            eprintln!("wrote {} observations of {} modes to {}", ds.series.len(), ds.series.dim(), out.display());
        }
        Command::Fit { cfg, data, out, method, p, r, max_evals, report, sweep, check_steps } => {
            let ds = Dataset::load(&data)?;
            let mut rc = optional_config(&cfg, &ds)?;
            if let Some(spec) = sweep {
                if let Some(m) = method {
                    rc.fit.method = m.into();
                }
                if let Some(m) = max_evals {
                    rc.fit.max_evals = m;
                }
                let pairs = commands::parse_sweep(&spec)?;
                commands::sweep(&rc, &ds, &pairs, check_steps, &out)?;
                eprintln!("wrote sweep table to {}", out.display());
            } else {
                let args = commands::FitArgs { method: method.map(Into::into), p, r, max_evals, out: out.clone(), report };
                let o = commands::fit(rc, &ds, &args)?;
                eprintln!(
                    "fit {:?} p={} r={}: E'={:.4e} (relative {:.4e}), {} evaluations; model written to {}",
                    o.file.fit.method,
                    o.file.orders.p(),
                    o.file.orders.r(),
                    o.file.fit.mse,
                    o.file.fit.relative_mse,
                    o.file.fit.evaluations,
                    out.display()
                );
            }
        }
        Command::Sweep { cfg, data, orders, method, check_steps, out } => {
            let ds = Dataset::load(&data)?;
            let mut rc = optional_config(&cfg, &ds)?;
            if let Some(m) = method {
                rc.fit.method = m.into();
            }
            let pairs = commands::parse_sweep(&orders)?;
            commands::sweep(&rc, &ds, &pairs, check_steps, &out)?;
            eprintln!("wrote sweep table to {}", out.display());
        }
        Command::SimulateReduced { cfg, model, data, out, steps, seed, start, no_noise, csv } => {
            let ds = Dataset::load(&data)?;
            let rc = optional_config(&cfg, &ds)?;
            let mf = ModelFile::load(&model)?;
            let args = commands::SimulateReducedArgs { steps, seed, start, no_noise, out: out.clone(), csv };
            let run = commands::simulate_reduced(&rc, &mf, &ds, &args)?;
            eprintln!("wrote {} reduced-model states to {}", run.series.len(), out.display());
        }
        Command::Forecast { cfg, model, data, out_dir, ens, horizon, pieces, spacing, first, seed, no_noise, members } => {
            let ds = Dataset::load(&data)?;
            let rc = optional_config(&cfg, &ds)?;
            let mf = ModelFile::load(&model)?;
            let args =
                commands::ForecastArgs { ens, horizon, pieces, spacing, first, seed, no_noise, members, out_dir: out_dir.clone() };
            let s = commands::forecast(&rc, &mf, &ds, &args)?;
            eprintln!(
                "forecast of {} pieces x {} members; final RMSE {:.4} (climatology {:.4}); output in {}",
                s.pieces,
                s.ensemble,
                s.rmse_real.last().copied().unwrap_or(f64::NAN),
                s.climatological_rmse,
                out_dir.display()
            );
        }
        Command::Stats { a, b, which, max_lag, bins, segment, force, out_dir } => {
            let (da, db) = (Dataset::load(&a)?, Dataset::load(&b)?);
            let args = commands::StatsArgs { which, max_lag, bins, segment, force, out_dir: out_dir.clone() };
            let s = commands::stats(&da, &db, &args)?;
            for (stat, d) in &s.defects {
                eprintln!("{stat:?}: largest discrepancy {d:.4e}");
            }
        }
    }
    Ok(())
}
