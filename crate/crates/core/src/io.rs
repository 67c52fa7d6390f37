//! File formats: quadrature records (JSON lines), density matrices (JSON)
//! and plain-text CSV exports.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::DensityMatrix;
use crate::homodyne::{BhdModel, QuadratureRecord};
use crate::source::ClickDetector;

/// Metadata written as the first line of a records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RecordsHeader {
    pub seed: u64,
    /// Free-form description of the sampled state.
    pub state: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector: Option<ClickDetector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bhd: Option<BhdModel>,
    /// Required number of trigger clicks.
    pub herald_clicks: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub herald_probability: Option<f64>,
    /// Heralded events per second.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub herald_rate: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: RecordsHeader,
}

pub fn write_records<W: Write>(mut w: W, header: &RecordsHeader, records: &[QuadratureRecord]) -> Result<()> {
    serde_json::to_writer(&mut w, &HeaderLine { header: header.clone() })?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a records stream; the header line is optional.
pub fn read_records<R: BufRead>(r: R) -> Result<(Option<RecordsHeader>, Vec<QuadratureRecord>)> {
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 && trimmed.starts_with("{\"header\"") {
            let h: HeaderLine =
                serde_json::from_str(trimmed).map_err(|e| Error::Parse(format!("records header: {e}")))?;
            header = Some(h.header);
            continue;
        }
        let rec: QuadratureRecord =
            serde_json::from_str(trimmed).map_err(|e| Error::Parse(format!("record on line {}: {e}", i + 1)))?;
        if !rec.x.is_finite() || !rec.theta.is_finite() {
            return Err(Error::Parse(format!("non-finite value on line {}", i + 1)));
        }
        records.push(rec);
    }
    Ok((header, records))
}

pub fn save_records(path: &Path, header: &RecordsHeader, records: &[QuadratureRecord]) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), header, records)
}

pub fn load_records(path: &Path) -> Result<(Option<RecordsHeader>, Vec<QuadratureRecord>)> {
    read_records(BufReader::new(File::open(path)?))
}

pub fn save_state(path: &Path, rho: &DensityMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, rho)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<DensityMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_state(&text)
}

pub fn parse_state(text: &str) -> Result<DensityMatrix> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("density matrix: {e}")))
}

/// Writes any serializable value as pretty JSON.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn save_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Two-column CSV.
pub fn xy_csv(x_label: &str, y_label: &str, xs: &[f64], ys: &[f64]) -> String {
    let mut out = format!("{x_label},{y_label}\n");
    for (x, y) in xs.iter().zip(ys) {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}
