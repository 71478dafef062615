use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniformly sampled complex vector time series, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSeries {
    dim: usize,
    dt: f64,
    label: String,
    data: Vec<Complex64>,
}

impl ComplexSeries {
    /// Builds a series from row-major data of `data.len() / dim` rows.
    pub fn new(dim: usize, dt: f64, label: impl Into<String>, data: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return invalid("series dimension must be at least 1");
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return invalid(format!("sampling interval must be positive, got {dt}"));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return invalid(format!(
                "data length {} is not a positive multiple of dimension {dim}",
                data.len()
            ));
        }
        Ok(Self { dim, dt, label: label.into(), data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>], dt: f64, label: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return invalid("rows have differing dimensions");
        }
        Self::new(dim, dt, label, rows.concat())
    }

    /// A series of `len` zero rows.
    pub fn zeros(len: usize, dim: usize, dt: f64, label: impl Into<String>) -> Result<Self> {
        Self::new(dim, dt, label, vec![Complex64::new(0.0, 0.0); len * dim])
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn row(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Complex64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    /// One component as a scalar sequence.
    pub fn component(&self, i: usize) -> Vec<Complex64> {
        self.rows().map(|r| r[i]).collect()
    }

    /// Rows `start..end` as a new series with the same dt and label.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return invalid(format!("slice {start}..{end} out of range for length {}", self.len()));
        }
        Self::new(
            self.dim,
            self.dt,
            self.label.clone(),
            self.data[start * self.dim..end * self.dim].to_vec(),
        )
    }

    /// Selected components, in the given order.
    pub fn select(&self, components: &[usize]) -> Result<Self> {
        if components.is_empty() || components.iter().any(|&c| c >= self.dim) {
            return invalid("component selection out of range");
        }
        let data = self
            .rows()
            .flat_map(|r| components.iter().map(move |&c| r[c]))
            .collect();
        Self::new(components.len(), self.dt, self.label.clone(), data)
    }

    pub fn push_row(&mut self, row: &[Complex64]) {
        assert_eq!(row.len(), self.dim, "row dimension mismatch");
        self.data.extend_from_slice(row);
    }

    /// Per-component time mean.
    pub fn mean(&self) -> Vec<Complex64> {
        let mut m = vec![Complex64::new(0.0, 0.0); self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Largest modulus over all entries.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ComplexSeries::new(0, 1.0, "", vec![c(1.0)]).is_err());
        assert!(ComplexSeries::new(2, 1.0, "", vec![c(1.0)]).is_err());
        assert!(ComplexSeries::new(1, 0.0, "", vec![c(1.0)]).is_err());
        assert!(ComplexSeries::new(1, 1.0, "", vec![]).is_err());
    }

    #[test]
    fn rows_and_components() {
        let s = ComplexSeries::new(2, 0.5, "x", (0..6).map(|i| c(i as f64)).collect()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.row(1), &[c(2.0), c(3.0)]);
        assert_eq!(s.component(1), vec![c(1.0), c(3.0), c(5.0)]);
        assert_eq!(s.slice(1, 3).unwrap().row(0), &[c(2.0), c(3.0)]);
        assert_eq!(s.select(&[1]).unwrap().data(), &[c(1.0), c(3.0), c(5.0)]);
        assert_eq!(s.mean(), vec![c(2.0), c(3.0)]);
    }
}
