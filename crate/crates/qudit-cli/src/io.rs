//! File formats: CSV data tables and JSON artifacts.
//!
//! All floating-point values are written in shortest round-trip form, so a
//! table written by one command and read back by another reproduces the
//! numbers bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use qudit_core::decay::{PopulationTrace, Provenance};
use qudit_core::ramsey::RamseyTrace;

use crate::error::{CliError, Result};

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn parse_field(raw: &str, path: &Path, line: usize) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "{} line {line}: `{raw}` is not a number",
            path.display()
        ))
    })
}

/// Reads a population-decay table with header `time_us,p0,p1,...`.
pub fn read_decay_csv(path: &Path) -> Result<PopulationTrace> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.first() != Some(&"time_us") || cols.len() < 3 {
        return Err(CliError::Data(format!(
            "{} must start with header `time_us,p0,p1,...`",
            path.display()
        )));
    }
    for (k, col) in cols[1..].iter().enumerate() {
        if *col != format!("p{k}") {
            return Err(CliError::Data(format!(
                "{}: population column {} is `{col}`, expected `p{k}`",
                path.display(),
                k + 1
            )));
        }
    }

    let mut times = Vec::new();
    let mut populations = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if record.len() != cols.len() {
            return Err(CliError::Data(format!(
                "{} line {}: expected {} fields, got {}",
                path.display(),
                row + 2,
                cols.len(),
                record.len()
            )));
        }
        let mut fields = record.iter();
        times.push(parse_field(fields.next().unwrap(), path, row + 2)?);
        let mut p = Vec::with_capacity(cols.len() - 1);
        for raw in fields {
            p.push(parse_field(raw, path, row + 2)?);
        }
        populations.push(p);
    }

    let trace = PopulationTrace {
        times,
        populations,
        provenance: Provenance::Measured,
    };
    trace.validate().map_err(CliError::data)?;
    Ok(trace)
}

/// Writes a population-decay table with header `time_us,p0,p1,...`.
pub fn write_decay_csv(path: &Path, trace: &PopulationTrace) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    let n = trace.n_levels();
    let mut header = vec!["time_us".to_string()];
    header.extend((0..n).map(|k| format!("p{k}")));
    writer
        .write_record(&header)
        .and_then(|()| {
            for (t, p) in trace.times.iter().zip(&trace.populations) {
                let mut row = vec![format_f64(*t)];
                row.extend(p.iter().map(|v| format_f64(*v)));
                writer.write_record(&row)?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Reads a Ramsey record with header `time_us,amplitude`.
pub fn read_ramsey_csv(path: &Path) -> Result<RamseyTrace> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["time_us", "amplitude"] {
        return Err(CliError::Data(format!(
            "{} must have header `time_us,amplitude`",
            path.display()
        )));
    }
    let mut times = Vec::new();
    let mut amplitude = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if record.len() != 2 {
            return Err(CliError::Data(format!(
                "{} line {}: expected 2 fields, got {}",
                path.display(),
                row + 2,
                record.len()
            )));
        }
        times.push(parse_field(&record[0], path, row + 2)?);
        amplitude.push(parse_field(&record[1], path, row + 2)?);
    }
    RamseyTrace::new(times, amplitude).map_err(CliError::data)
}

/// Writes a Ramsey record with header `time_us,amplitude`.
pub fn write_ramsey_csv(path: &Path, trace: &RamseyTrace) -> Result<()> {
    write_two_column_csv(path, "time_us", "amplitude", &trace.times, &trace.amplitude)
}

fn write_two_column_csv(
    path: &Path,
    h0: &str,
    h1: &str,
    a: &[f64],
    b: &[f64],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record([h0, h1])
        .and_then(|()| {
            for (x, y) in a.iter().zip(b) {
                writer.write_record([format_f64(*x), format_f64(*y)])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// A transmission sweep: complex samples when both quadratures were
/// recorded, magnitudes otherwise.
pub enum Sweep {
    Complex(Vec<f64>, Vec<Complex64>),
    Magnitude(Vec<f64>, Vec<f64>),
}

/// Reads a transmission sweep; the header picks the variant:
/// `freq_ghz,re,im` for complex data, `freq_ghz,mag` for magnitude-only.
pub fn read_spectrum_csv(path: &Path) -> Result<Sweep> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let complex = match cols.as_slice() {
        ["freq_ghz", "re", "im"] => true,
        ["freq_ghz", "mag"] => false,
        _ => {
            return Err(CliError::Data(format!(
                "{} must have header `freq_ghz,re,im` or `freq_ghz,mag`",
                path.display()
            )))
        }
    };

    let mut freqs = Vec::new();
    let mut samples = Vec::new();
    let mut mags = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if record.len() != cols.len() {
            return Err(CliError::Data(format!(
                "{} line {}: expected {} fields, got {}",
                path.display(),
                row + 2,
                cols.len(),
                record.len()
            )));
        }
        freqs.push(parse_field(&record[0], path, row + 2)?);
        if complex {
            let re = parse_field(&record[1], path, row + 2)?;
            let im = parse_field(&record[2], path, row + 2)?;
            samples.push(Complex64::new(re, im));
        } else {
            mags.push(parse_field(&record[1], path, row + 2)?);
        }
    }
    Ok(if complex {
        Sweep::Complex(freqs, samples)
    } else {
        Sweep::Magnitude(freqs, mags)
    })
}

/// Writes a complex transmission sweep with header `freq_ghz,re,im`.
pub fn write_spectrum_csv(path: &Path, freqs: &[f64], samples: &[Complex64]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record(["freq_ghz", "re", "im"])
        .and_then(|()| {
            for (f, s) in freqs.iter().zip(samples) {
                writer.write_record([format_f64(*f), format_f64(s.re), format_f64(s.im)])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Reads readout voltages, one per line under the header `voltage`.
pub fn read_voltages_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["voltage"] {
        return Err(CliError::Data(format!(
            "{} must have header `voltage`",
            path.display()
        )));
    }
    let mut voltages = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        voltages.push(parse_field(&record[0], path, row + 2)?);
    }
    if voltages.is_empty() {
        return Err(CliError::Data(format!("{} holds no voltages", path.display())));
    }
    Ok(voltages)
}

/// Writes readout voltages under the header `voltage`.
pub fn write_voltages_csv(path: &Path, voltages: &[f64]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record(["voltage"])
        .and_then(|()| {
            for v in voltages {
                writer.write_record([format_f64(*v)])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Row-major readout calibration matrix.
#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrationFile {
    /// `rows[i][j]` maps population `j` into voltage `i`.
    pub rows: Vec<Vec<f64>>,
}

/// Reads a calibration matrix from JSON.
pub fn read_calibration_json(path: &Path) -> Result<CalibrationFile> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&raw).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Fitted (or generating) decay rates in both conventions.
///
/// Keys are `g{i}{j}` for the rate from level `i` down to level `j`.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct RatesFile {
    pub rates_per_us: BTreeMap<String, f64>,
    #[serde(default)]
    pub inverse_rates_us: BTreeMap<String, f64>,
    #[serde(default)]
    pub stderr_per_us: BTreeMap<String, f64>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub residual_norm: Option<f64>,
}

impl RatesFile {
    /// Rate from level `i` to level `j`, per µs.
    pub fn rate(&self, i: usize, j: usize) -> Option<f64> {
        self.rates_per_us.get(&format!("g{i}{j}")).copied()
    }
}

/// Reads a rates artifact from JSON.
pub fn read_rates_json(path: &Path) -> Result<RatesFile> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&raw).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes a JSON artifact with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Shortest round-trip decimal form of a float.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}
