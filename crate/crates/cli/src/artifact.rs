//! Model and fit-report files: JSON documents whose numeric arrays are
//! base64-encoded little-endian `f64` pairs `(re, im)`.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use wienerrom::cascade::CascadeState;
use wienerrom::fit::{FitMethod, FitReport};
use wienerrom::noise::NoiseModel;
use wienerrom::optim::TraceEntry;
use wienerrom::predictors::BasisDescriptor;
use wienerrom::{CascadeCoefficients, CascadeModel, ForcingWeights, ModelOrders};

use crate::provenance::Provenance;

pub const MODEL_SCHEMA: u32 = 1;

/// A complex array of the given shape, row-major, base64 encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub shape: Vec<usize>,
    pub data: String,
}

impl Block {
    pub fn encode(shape: Vec<usize>, values: &[Complex64]) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let mut raw = Vec::with_capacity(values.len() * 16);
        for z in values {
            raw.extend_from_slice(&z.re.to_le_bytes());
            raw.extend_from_slice(&z.im.to_le_bytes());
        }
        Self { shape, data: STANDARD.encode(raw) }
    }

    pub fn decode(&self) -> Result<Vec<Complex64>> {
        let raw = STANDARD.decode(&self.data).context("invalid base64 block")?;
        let expect = self.shape.iter().product::<usize>() * 16;
        ensure!(raw.len() == expect, "block of shape {:?} holds {} bytes, expected {expect}", self.shape, raw.len());
        Ok(raw
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                    f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                )
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFile {
    pub dim: usize,
    pub dt: f64,
    pub grid: usize,
    pub real: bool,
    pub trimmed: usize,
    /// `[grid, dim, dim]`, each factor column-major.
    pub factors: Block,
}

impl NoiseFile {
    pub fn from_model(n: &NoiseModel) -> Self {
        Self {
            dim: n.dim,
            dt: n.dt,
            grid: n.grid,
            real: n.real,
            trimmed: n.trimmed,
            factors: Block::encode(vec![n.grid, n.dim, n.dim], &n.factors),
        }
    }

    pub fn to_model(&self) -> Result<NoiseModel> {
        ensure!(self.factors.shape == [self.grid, self.dim, self.dim], "noise factor block has the wrong shape");
        ensure!(self.dim > 0 && self.grid > 0 && self.dt > 0.0, "noise model header is degenerate");
        Ok(NoiseModel {
            dim: self.dim,
            dt: self.dt,
            grid: self.grid,
            factors: self.factors.decode()?,
            real: self.real,
            trimmed: self.trimmed,
        })
    }
}

/// Headline numbers of a fit, stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub method: FitMethod,
    pub mse: f64,
    pub signal_power: f64,
    /// `mse / signal_power`.
    pub relative_mse: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub stable: bool,
    pub condition: f64,
    pub warnings: Vec<String>,
}

impl FitSummary {
    pub fn from_report(r: &FitReport) -> Self {
        Self {
            method: r.method,
            mse: r.mse,
            signal_power: r.signal_power,
            relative_mse: if r.signal_power > 0.0 { r.mse / r.signal_power } else { f64::NAN },
            evaluations: r.evaluations,
            converged: r.converged,
            stable: r.stable,
            condition: r.condition,
            warnings: r.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub orders: ModelOrders,
    pub cascade: CascadeCoefficients,
    pub basis: BasisDescriptor,
    pub state_dim: usize,
    pub predictor_dim: usize,
    /// `[r + 1, m]`: the weight vectors `b_0 .. b_r`.
    pub weights: Block,
    /// `[q + 1, d]`, when the model is forced.
    pub forcing: Option<Block>,
    pub noise: Option<NoiseFile>,
    pub fit: FitSummary,
}

impl ModelFile {
    pub fn new(model: &CascadeModel, noise: Option<&NoiseModel>, fit: FitSummary, provenance: Provenance) -> Self {
        let weights: Vec<Complex64> = model.weights.concat();
        Self {
            schema_version: MODEL_SCHEMA,
            provenance,
            orders: model.orders,
            cascade: model.cascade.clone(),
            basis: model.basis.clone(),
            state_dim: model.state_dim,
            predictor_dim: model.predictor_dim,
            weights: Block::encode(vec![model.weights.len(), model.predictor_dim], &weights),
            forcing: model
                .forcing
                .as_ref()
                .map(|f| Block::encode(vec![f.leads.len(), model.state_dim], &f.leads.concat())),
            noise: noise.map(NoiseFile::from_model),
            fit,
        }
    }

    /// Rebuilds and validates the model. Unstable linear fits are carried
    /// as they are (flagged in `fit.stable`); anything else must satisfy the
    /// triangle constraints.
    pub fn model(&self) -> Result<CascadeModel> {
        if self.schema_version != MODEL_SCHEMA {
            bail!("model schema version {} is not supported (expected {MODEL_SCHEMA})", self.schema_version);
        }
        let c = &self.cascade;
        let cascade = if self.fit.stable {
            CascadeCoefficients::new(c.pairs().to_vec(), c.linear(), c.margin()).context("model cascade")?
        } else {
            CascadeCoefficients::new_unchecked(c.pairs().to_vec(), c.linear(), c.margin())
        };
        self.basis.validate().context("model basis")?;
        let m = self.predictor_dim;
        ensure!(self.weights.shape == [self.orders.r() + 1, m], "weight block has shape {:?}", self.weights.shape);
        let weights: Vec<Vec<Complex64>> = self.weights.decode()?.chunks(m.max(1)).map(<[_]>::to_vec).collect();
        let forcing = match &self.forcing {
            Some(b) => {
                ensure!(b.shape.len() == 2 && b.shape[1] == self.state_dim, "forcing block has shape {:?}", b.shape);
                let v = b.decode()?;
                Some(ForcingWeights { leads: v.chunks(self.state_dim).map(<[_]>::to_vec).collect() })
            }
            None => None,
        };
        let model = CascadeModel::new(self.orders, cascade, weights, forcing, self.basis.clone())?;
        ensure!(
            model.state_dim == self.state_dim && model.predictor_dim == self.predictor_dim,
            "model dimensions disagree with its basis"
        );
        Ok(model)
    }

    pub fn noise_model(&self) -> Result<Option<NoiseModel>> {
        self.noise.as_ref().map(NoiseFile::to_model).transpose()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// The full fit report: summary, optimizer trace and residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub summary: FitSummary,
    pub roots: Vec<[f64; 2]>,
    pub residual_start: usize,
    /// `[n, d]` one-step residuals.
    pub residuals: Block,
    /// `[n, d]` multistep regression residuals (linear method only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equation_residuals: Option<Block>,
    pub initial_state: CascadeState,
    pub trace: Vec<TraceEntry>,
}

impl ReportFile {
    pub fn new(r: &FitReport, provenance: Provenance) -> Self {
        Self {
            schema_version: MODEL_SCHEMA,
            provenance,
            summary: FitSummary::from_report(r),
            roots: r.model.cascade.roots().iter().map(|z| [z.re, z.im]).collect(),
            residual_start: r.residual_start,
            residuals: Block::encode(vec![r.residuals.len(), r.residuals.dim()], r.residuals.data()),
            equation_residuals: r.equation_residuals.as_ref().map(|e| Block::encode(vec![e.len(), e.dim()], e.data())),
            initial_state: r.initial_state.clone(),
            trace: r.trace.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
