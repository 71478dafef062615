//! Dataset container: an 8-byte magic, a little-endian `u64` header length,
//! a JSON header, then the blocks listed in the header as little-endian
//! `f64` pairs `(re, im)`, row-major.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use wienerrom::ComplexSeries;

use crate::provenance::Provenance;

pub const MAGIC: &[u8; 8] = b"WROMDAT\0";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub dim: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema_version: u32,
    /// Dimension of the main block.
    pub d: usize,
    pub dt: f64,
    /// Rows of the main block.
    pub n: usize,
    pub label: String,
    pub seeds: Vec<u64>,
    pub blocks: Vec<BlockInfo>,
    pub provenance: Provenance,
    /// Free-form description of how the data was produced.
    #[serde(default)]
    pub source: serde_json::Value,
}

/// A main series plus optional named side blocks (e.g. forcing).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: Header,
    pub series: ComplexSeries,
    pub extra: Vec<(String, ComplexSeries)>,
}

impl Dataset {
    pub fn new(
        series: ComplexSeries,
        extra: Vec<(String, ComplexSeries)>,
        seeds: Vec<u64>,
        provenance: Provenance,
        source: serde_json::Value,
    ) -> Self {
        let mut blocks = vec![BlockInfo { name: "main".into(), dim: series.dim(), len: series.len() }];
        blocks.extend(extra.iter().map(|(n, s)| BlockInfo { name: n.clone(), dim: s.dim(), len: s.len() }));
        let header = Header {
            schema_version: SCHEMA_VERSION,
            d: series.dim(),
            dt: series.dt(),
            n: series.len(),
            label: series.label().to_string(),
            seeds,
            blocks,
            provenance,
            source,
        };
        Self { header, series, extra }
    }

    pub fn block(&self, name: &str) -> Option<&ComplexSeries> {
        self.extra.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::new();
        for s in std::iter::once(&self.series).chain(self.extra.iter().map(|(_, s)| s)) {
            buf.clear();
            buf.reserve(s.data().len() * 16);
            for z in s.data() {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).context("reading dataset magic")?;
        ensure!(&magic == MAGIC, "not a dataset file (bad magic)");
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        ensure!(len < 1 << 30, "dataset header length {len} is implausible");
        let mut header = vec![0u8; len];
        r.read_exact(&mut header).context("reading dataset header")?;
        let header: Header = serde_json::from_slice(&header).context("parsing dataset header")?;
        if header.schema_version != SCHEMA_VERSION {
            bail!("dataset schema version {} is not supported (expected {SCHEMA_VERSION})", header.schema_version);
        }
        ensure!(
            header.blocks.first().is_some_and(|b| b.name == "main" && b.dim == header.d && b.len == header.n),
            "dataset header does not describe its main block consistently"
        );
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for b in &header.blocks {
            let count = b.dim.checked_mul(b.len).context("block size overflow")?;
            let mut raw = vec![0u8; count * 16];
            r.read_exact(&mut raw).with_context(|| format!("reading block {}", b.name))?;
            let data: Vec<Complex64> = raw
                .chunks_exact(16)
                .map(|c| {
                    let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                    let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                    Complex64::new(re, im)
                })
                .collect();
            let label = if b.name == "main" { header.label.clone() } else { b.name.clone() };
            blocks.push((b.name.clone(), ComplexSeries::new(b.dim, header.dt, label, data)?));
        }
        let mut trailing = [0u8; 1];
        ensure!(r.read(&mut trailing)? == 0, "dataset has trailing bytes");
        let mut it = blocks.into_iter();
        let (_, series) = it.next().expect("checked above");
        Ok(Self { header, series, extra: it.collect() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Self::read_from(std::io::BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
    }
}

/// Plot-ready text form: `t,re_u1,im_u1,...`, one row per sample.
pub fn write_csv(series: &ComplexSeries, mut w: impl Write) -> Result<()> {
    let mut head = String::from("t");
    for k in 1..=series.dim() {
        head.push_str(&format!(",re_u{k},im_u{k}"));
    }
    writeln!(w, "{head}")?;
    for (t, row) in series.rows().enumerate() {
        let mut line = format!("{}", t as f64 * series.dt());
        for z in row {
            line.push_str(&format!(",{},{}", z.re, z.im));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_csv(series: &ComplexSeries, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(f);
    write_csv(series, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let data: Vec<Complex64> = (0..12).map(|k| Complex64::new(k as f64 * 0.1, -(k as f64) / 3.0)).collect();
        let s = ComplexSeries::new(3, 0.5, "obs", data).unwrap();
        let f = ComplexSeries::new(3, 0.5, "forcing", vec![Complex64::new(1.0, 2.0); 12]).unwrap();
        Dataset::new(s, vec![("forcing".into(), f)], vec![4], Provenance::root("abc"), serde_json::Value::Null)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = sample();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let back = Dataset::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn payload_is_little_endian_pairs() {
        let ds = sample();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let hlen = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let payload = &buf[16 + hlen..];
        assert_eq!(payload.len(), 24 * 16);
        let re1 = f64::from_le_bytes(payload[16..24].try_into().unwrap());
        let im1 = f64::from_le_bytes(payload[24..32].try_into().unwrap());
        assert_eq!((re1, im1), (0.1, -1.0 / 3.0));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(Dataset::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let mut out = Vec::new();
        write_csv(&sample().series, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,re_u1,im_u1,re_u2,im_u2,re_u3,im_u3");
        assert_eq!(lines.next().unwrap().split(',').count(), 7);
        assert_eq!(text.lines().count(), 5);
    }
}
