//! Run configuration: one TOML file with `[pde]`, `[fit]`, `[noise]`,
//! `[simulate]` and `[forecast]` tables. Unknown keys are rejected.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wienerrom::fit::{FitConfig, FitMethod};
use wienerrom::models::{PdeKind, SpectralPdeConfig};
use wienerrom::noise::NoiseConfig;
use wienerrom::optim::OptimizerConfig;
use wienerrom::predictors::BasisDescriptor;
use wienerrom::spectral::Window;
use wienerrom::{ModelOrders, DEFAULT_MARGIN};

pub const PRESETS: &[(&str, &str)] = &[
    ("ks-desk", include_str!("../presets/ks-desk.toml")),
    ("ks-paper", include_str!("../presets/ks-paper.toml")),
    ("burgers-desk", include_str!("../presets/burgers-desk.toml")),
    ("burgers-paper", include_str!("../presets/burgers-paper.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pde: SpectralPdeConfig,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub forecast: ForecastSection,
    /// Printed before long runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub p: usize,
    pub r: usize,
    pub method: FitMethod,
    pub margin: f64,
    pub ridge: f64,
    pub max_evals: usize,
    pub initial_radius: f64,
    pub min_radius: f64,
    pub ftol_rel: f64,
    pub default_starts: usize,
    pub extra_starts: Vec<Vec<f64>>,
    pub fit_internal_ics: bool,
    /// Number of forcing leads; zero fits no forcing term.
    pub forcing_leads: usize,
    /// Memory lags of the Burgers closure basis.
    pub j_max: usize,
    /// Leading observations dropped before fitting.
    pub skip: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        Self {
            p: 3,
            r: 3,
            method: FitMethod::Nonlinear,
            margin: DEFAULT_MARGIN,
            ridge: wienerrom::fit::DEFAULT_RIDGE,
            max_evals: opt.max_evals,
            initial_radius: opt.initial_radius,
            min_radius: opt.min_radius,
            ftol_rel: opt.ftol_rel,
            default_starts: opt.default_starts,
            extra_starts: Vec::new(),
            fit_internal_ics: true,
            forcing_leads: 0,
            j_max: 1,
            skip: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub grid: usize,
    pub overlap: f64,
    pub window: Window,
    /// Residuals dropped before estimation; defaults to `max(p, 100)`.
    pub trim: Option<usize>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseConfig::for_order(0);
        Self { grid: n.grid, overlap: n.overlap, window: n.window, trim: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub steps: usize,
    pub seed: u64,
    pub blowup_factor: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { steps: 100_000, seed: 7, blowup_factor: wienerrom::sim::SimOptions::default().blowup_factor }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastSection {
    pub ensemble: usize,
    pub horizon: usize,
    pub pieces: usize,
    pub spacing: usize,
    /// First piece start in the dataset.
    pub first: usize,
    pub seed: u64,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self { ensemble: 100, horizon: 300, pieces: 50, spacing: 300, first: 0, seed: 11 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| key_path(text, s)).unwrap_or_default();
            anyhow::anyhow!("configuration error{at}: {e}")
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn preset(name: &str) -> Result<Self> {
        match PRESETS.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::parse(text).with_context(|| format!("preset {name}")),
            None => {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                bail!("unknown preset {name:?}; available: {}", names.join(", "))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pde.validate().context("pde")?;
        self.fit_config().validate().context("fit")?;
        ModelOrders::new(self.fit.p, self.fit.r).context("fit")?;
        if self.fit.j_max == 0 {
            bail!("fit.j_max: must be at least 1");
        }
        if self.fit.default_starts > 5 {
            bail!("fit.default_starts: at most 5 built-in starts exist");
        }
        if self.noise.grid < 2 {
            bail!("noise.grid: needs at least 2 frequencies");
        }
        if !(0.0..1.0).contains(&self.noise.overlap) {
            bail!("noise.overlap: must lie in [0, 1)");
        }
        if !(self.simulate.blowup_factor > 1.0) {
            bail!("simulate.blowup_factor: must exceed 1");
        }
        if self.forecast.ensemble == 0 || self.forecast.horizon == 0 || self.forecast.pieces == 0 {
            bail!("forecast: ensemble, horizon and pieces must be positive");
        }
        if self.forecast.spacing == 0 {
            bail!("forecast.spacing: must be positive");
        }
        Ok(())
    }

    /// Orders taken from the config; they were checked by `validate`.
    pub fn orders(&self) -> ModelOrders {
        ModelOrders::new(self.fit.p, self.fit.r).expect("validated orders")
    }

    pub fn fit_config(&self) -> FitConfig {
        let f = &self.fit;
        let mut cfg = FitConfig::new(ModelOrders::new(f.p, f.r).unwrap_or_else(|_| ModelOrders::new(0, 0).unwrap()));
        cfg.margin = f.margin;
        cfg.ridge = f.ridge;
        cfg.fit_internal_ics = f.fit_internal_ics;
        cfg.forcing_leads = f.forcing_leads;
        cfg.optimizer.max_evals = f.max_evals;
        cfg.optimizer.initial_radius = f.initial_radius;
        cfg.optimizer.min_radius = f.min_radius;
        cfg.optimizer.ftol_rel = f.ftol_rel;
        cfg.optimizer.default_starts = f.default_starts;
        cfg.optimizer.extra_starts = f.extra_starts.clone();
        cfg
    }

    pub fn noise_config(&self) -> NoiseConfig {
        let mut n = NoiseConfig::for_order(self.fit.p);
        n.grid = self.noise.grid;
        n.overlap = self.noise.overlap;
        n.window = self.noise.window;
        if let Some(t) = self.noise.trim {
            n.trim = t;
        }
        n
    }

    /// Closure basis matching the PDE on the observed modes.
    pub fn basis(&self) -> BasisDescriptor {
        let p = &self.pde;
        match p.kind {
            PdeKind::Ks => BasisDescriptor::ks(p.observed, p.length, p.delta()),
            PdeKind::Burgers => BasisDescriptor::burgers(p.observed, p.nu, p.delta(), self.fit.j_max),
        }
    }
}

/// ` at table.key` for the key under an error span.
fn key_path(text: &str, span: std::ops::Range<usize>) -> String {
    let start = span.start.min(text.len());
    let before = &text[..start];
    let table = before
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line.split('=').next().unwrap_or("").trim();
    let key = if key.is_empty() || key.starts_with('[') { None } else { Some(key) };
    match (table, key) {
        (Some(t), Some(k)) => format!(" at {t}.{k}"),
        (Some(t), None) => format!(" in [{t}]"),
        (None, Some(k)) => format!(" at {k}"),
        (None, None) => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            assert!(cfg.pde.observed > 0, "{name}");
        }
    }

    #[test]
    fn desk_presets_have_documented_parameters() {
        let ks = RunConfig::preset("ks-desk").unwrap();
        assert_eq!((ks.pde.n_modes, ks.pde.observed), (108, 5));
        assert!((ks.pde.delta() - 0.1).abs() < 1e-12);
        let b = RunConfig::preset("burgers-desk").unwrap();
        assert_eq!(b.pde.observed, 9);
        assert!((b.pde.delta() - 0.01).abs() < 1e-12);
        assert_eq!(b.pde.nu, 0.05);
    }

    #[test]
    fn unknown_key_is_reported_with_its_table() {
        let mut text = include_str!("../presets/ks-desk.toml").to_string();
        text = text.replace("[fit]", "[fit]\nbogus = 1");
        let err = format!("{:#}", RunConfig::parse(&text).unwrap_err());
        assert!(err.contains("at fit.bogus"), "{err}");
    }

    #[test]
    fn type_error_names_the_key() {
        let text = include_str!("../presets/ks-desk.toml").replace("grid = 256", "grid = \"many\"");
        let err = format!("{:#}", RunConfig::parse(&text).unwrap_err());
        assert!(err.contains("noise.grid"), "{err}");
    }

    #[test]
    fn bad_value_names_the_key() {
        let text = include_str!("../presets/ks-desk.toml").replace("dt = 0.001", "dt = -1.0");
        let err = format!("{:#}", RunConfig::parse(&text).unwrap_err());
        assert!(err.contains("pde") && err.contains("dt"), "{err}");
    }
}
