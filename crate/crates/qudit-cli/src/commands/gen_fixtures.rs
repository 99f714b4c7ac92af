//! `gen-fixtures`: a reproducible synthetic data corpus for exercising the
//! analysis commands end to end.
//!
//! Everything is generated from the run seed: decay traces from each
//! initial level, Ramsey records at three working points plus a four-tone
//! refusal case, a noisy three-line transmission sweep, and a calibrated
//! voltage set with its calibration matrix.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use qudit_core::decay::{synthesize_trace, RateMatrix};
use qudit_core::ramsey::{synthesize, FringeModel, RamseyTrace};
use qudit_core::readout::TransmissionModel;

use crate::error::{CliError, Result};
use crate::io;
use crate::report::{emit, Ctx, CsvTable, Report};

/// Reference decay lifetimes `1/Γ`, µs, as `(from, to, inverse_rate)`.
const REFERENCE_LIFETIMES_US: [(usize, usize, f64); 7] = [
    (1, 0, 84.0),
    (2, 1, 41.0),
    (3, 2, 30.0),
    (4, 3, 22.0),
    (2, 0, 1812.0),
    (3, 1, 1314.0),
    (3, 0, 2631.0),
];

/// Ramsey working points: `(f_a MHz, delta_f MHz, T2 µs)`.
const RAMSEY_STATES: [(f64, f64, f64); 3] = [(0.379, 0.0, 72.0), (0.504, 0.093, 32.0), (1.1, 2.5, 12.0)];

/// Tones of the multi-frequency refusal record, MHz.
const MULTITONE_MHZ: [f64; 4] = [0.4, 0.9, 1.8, 2.6];

/// Calibration matrix: `rows[i][j]` maps population `j` into voltage `i`.
const CALIBRATION_ROWS: [[f64; 4]; 4] = [
    [2.3, 0.0, 0.0, 0.0],
    [0.4, 2.3, 0.0, 0.0],
    [0.4, 0.25, 2.3, 0.0],
    [0.4, 0.25, 0.2, 2.3],
];

/// True populations behind the calibrated voltages.
const CALIBRATION_POPULATIONS: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

#[derive(Serialize)]
struct FixtureEntry {
    path: String,
    kind: &'static str,
}

#[derive(Serialize)]
struct FixtureResults {
    seed: u64,
    files: Vec<FixtureEntry>,
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let dir = ctx.artifact_dir()?.clone();
    let seed = ctx.seed;
    let mut files = Vec::new();

    write_decay(&dir, seed, &mut files)?;
    write_ramsey(&dir, seed, &mut files)?;
    write_spectrum(ctx, &dir, seed, &mut files)?;
    write_calibration(&dir, &mut files)?;

    let rows = files
        .iter()
        .map(|f| vec![f.path.clone(), f.kind.to_string()])
        .collect();
    let table = CsvTable {
        header: vec!["path", "kind"],
        rows,
    };
    let report = Report {
        command: "gen-fixtures",
        config_sha256: ctx.config_sha256.clone(),
        inputs: Vec::new(),
        results: FixtureResults { seed, files },
    };
    emit(ctx, &report, &table)
}

fn record(files: &mut Vec<FixtureEntry>, path: &Path, kind: &'static str) {
    files.push(FixtureEntry {
        path: path.display().to_string(),
        kind,
    });
}

/// Decay traces from levels 1–4 plus the generating rates.
fn write_decay(dir: &PathBuf, seed: u64, files: &mut Vec<FixtureEntry>) -> Result<()> {
    let rates = RateMatrix::from_inverse_times(5, &REFERENCE_LIFETIMES_US)
        .map_err(|e| CliError::Numerics(e.to_string()))?;
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 2.0).collect();
    for level in 1..=4 {
        let trace = synthesize_trace(&rates, level, &times, 0.01, seed + level as u64)?;
        let path = dir.join(format!("decay_from_{level}.csv"));
        io::write_decay_csv(&path, &trace)?;
        record(files, &path, "decay-trace");
    }

    let mut rates_per_us = BTreeMap::new();
    let mut inverse_rates_us = BTreeMap::new();
    for from in 1..5 {
        for to in 0..from {
            let rate = rates.rate(from, to);
            let key = format!("g{from}{to}");
            rates_per_us.insert(key.clone(), rate);
            if rate > 0.0 {
                inverse_rates_us.insert(key, 1.0 / rate);
            }
        }
    }
    let artifact = io::RatesFile {
        rates_per_us,
        inverse_rates_us,
        stderr_per_us: BTreeMap::new(),
        flags: Vec::new(),
        residual_norm: None,
    };
    let path = dir.join("rates.json");
    io::write_json(&path, &artifact)?;
    record(files, &path, "rates");
    Ok(())
}

/// Ramsey records at the three working points and the four-tone case.
fn write_ramsey(dir: &PathBuf, seed: u64, files: &mut Vec<FixtureEntry>) -> Result<()> {
    let times: Vec<f64> = (0..1024).map(|k| k as f64 * 0.1).collect();
    for (k, &(f_a, delta_f, t2)) in RAMSEY_STATES.iter().enumerate() {
        let model = FringeModel {
            amplitude: 1.0,
            t2,
            f_a,
            delta_f,
            phi1: 0.0,
            phi2: 0.0,
        };
        let trace = synthesize(&model, &times, 0.04, seed + 10 + k as u64)?;
        let path = dir.join(format!("ramsey_state_{}.csv", k + 1));
        io::write_ramsey_csv(&path, &trace)?;
        record(files, &path, "ramsey-trace");
    }

    let amplitude: Vec<f64> = times
        .iter()
        .map(|&t| {
            let envelope = (-t / 30.0f64).exp();
            envelope * MULTITONE_MHZ.iter().map(|&f| (TAU * f * t).cos()).sum::<f64>()
        })
        .collect();
    let trace = RamseyTrace::new(times, amplitude).map_err(CliError::data)?;
    let path = dir.join("ramsey_multitone.csv");
    io::write_ramsey_csv(&path, &trace)?;
    record(files, &path, "ramsey-trace");
    Ok(())
}

/// A noisy three-line transmission sweep around the cavity frequency.
fn write_spectrum(ctx: &Ctx, dir: &PathBuf, seed: u64, files: &mut Vec<FixtureEntry>) -> Result<()> {
    let f_c = ctx.config.device.f_c_ghz;
    let model = TransmissionModel {
        centers: vec![f_c - 2e-3, f_c, f_c + 2e-3],
        weights: vec![0.2, 0.3, 0.5],
        q_t: ctx.config.analysis.q_t.unwrap_or(10_975.0),
    };
    model.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let span = 8e-3;
    let n = 321;
    let freqs: Vec<f64> = (0..n)
        .map(|k| f_c - span / 2.0 + span * k as f64 / (n - 1) as f64)
        .collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 20);
    let noise = Normal::new(0.0, 0.003).expect("fixed sigma");
    let samples: Vec<Complex64> = freqs
        .iter()
        .map(|&f| model.s21(f) + Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng)))
        .collect();

    let path = dir.join("readout_spectrum.csv");
    io::write_spectrum_csv(&path, &freqs, &samples)?;
    record(files, &path, "transmission-sweep");
    Ok(())
}

/// Calibrated voltages with their calibration matrix.
fn write_calibration(dir: &PathBuf, files: &mut Vec<FixtureEntry>) -> Result<()> {
    let voltages: Vec<f64> = CALIBRATION_ROWS
        .iter()
        .map(|row| {
            row.iter()
                .zip(CALIBRATION_POPULATIONS)
                .map(|(l, p)| l * p)
                .sum()
        })
        .collect();

    let cal_path = dir.join("calibration.json");
    io::write_json(
        &cal_path,
        &io::CalibrationFile {
            rows: CALIBRATION_ROWS.iter().map(|r| r.to_vec()).collect(),
        },
    )?;
    record(files, &cal_path, "calibration");

    let volt_path = dir.join("voltages.csv");
    io::write_voltages_csv(&volt_path, &voltages)?;
    record(files, &volt_path, "voltages");
    Ok(())
}
