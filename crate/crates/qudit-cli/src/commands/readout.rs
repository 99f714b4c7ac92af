//! `readout`: level populations from a transmission spectrum or from
//! calibrated voltages, with the finite-readout-time decay correction.
//!
//! Spectrum mode fits multi-tone transmission — in the complex plane when
//! both quadratures are present, magnitude-only otherwise. Calibration mode
//! inverts a known voltage-response matrix instead.

use std::path::Path;

use serde::Serialize;

use qudit_core::readout::{
    fit_spectrum, fit_spectrum_magnitude, InversionMatrix, ReadoutCorrection, SpectrumFit,
};

use crate::error::{CliError, Result};
use crate::io::{self, format_f64, Sweep};
use crate::report::{emit, Ctx, CsvTable, Report};

#[derive(Serialize)]
struct ReadoutResults {
    /// `spectrum` or `calibration`.
    mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    centers_ghz: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_norm: Option<f64>,
    /// Raw level populations, before any decay correction.
    populations: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    corrected_populations: Option<Vec<f64>>,
    flags: Vec<String>,
}

pub struct ReadoutArgs<'a> {
    pub spectrum: Option<&'a Path>,
    pub voltages: Option<&'a Path>,
    pub calibration: Option<&'a Path>,
    pub rates: Option<&'a Path>,
}

pub fn run(ctx: &Ctx, args: &ReadoutArgs) -> Result<()> {
    let mut inputs = Vec::new();
    let mut flags = Vec::new();

    let (mode, fit, populations) = match (args.spectrum, args.voltages) {
        (Some(path), None) => {
            inputs.push(path.display().to_string());
            let (fit, populations) = from_spectrum(ctx, path, &mut flags)?;
            ("spectrum", Some(fit), populations)
        }
        (None, Some(path)) => {
            let calibration = args.calibration.ok_or_else(|| {
                CliError::Config("voltage readout needs --calibration".into())
            })?;
            inputs.push(path.display().to_string());
            inputs.push(calibration.display().to_string());
            ("calibration", None, from_voltages(path, calibration)?)
        }
        _ => {
            return Err(CliError::Config(
                "readout needs exactly one of --spectrum or --voltages".into(),
            ))
        }
    };

    let (lambda_bar, corrected) = match args.rates {
        Some(path) => {
            inputs.push(path.display().to_string());
            let rates = io::read_rates_json(path)?;
            let gamma10 = rates.rate(1, 0).ok_or_else(|| {
                CliError::Data(format!("{} lacks the g10 rate", path.display()))
            })?;
            let correction = ReadoutCorrection {
                t_read: ctx.config.analysis.t_read_us,
                gamma10,
            };
            let corrected = correction.apply(&populations)?;
            (Some(correction.lambda_bar()), Some(corrected))
        }
        None => {
            flags.push("no-decay-correction".into());
            (None, None)
        }
    };

    let results = ReadoutResults {
        mode,
        centers_ghz: fit.as_ref().map(|f| f.model.centers.clone()),
        q_t: fit.as_ref().map(|f| f.model.q_t),
        residual_norm: fit.as_ref().map(|f| f.residual_norm),
        populations,
        lambda_bar,
        corrected_populations: corrected,
        flags,
    };

    let rows = results
        .populations
        .iter()
        .enumerate()
        .map(|(level, p)| {
            vec![
                level.to_string(),
                format_f64(*p),
                results
                    .corrected_populations
                    .as_ref()
                    .map(|c| format_f64(c[level]))
                    .unwrap_or_default(),
            ]
        })
        .collect();
    let table = CsvTable {
        header: vec!["level", "population", "corrected"],
        rows,
    };

    let report = Report {
        command: "readout",
        config_sha256: ctx.config_sha256.clone(),
        inputs,
        results,
    };
    emit(ctx, &report, &table)
}

/// Fits the transmission sweep and converts line weights to populations.
fn from_spectrum(
    ctx: &Ctx,
    path: &Path,
    flags: &mut Vec<String>,
) -> Result<(SpectrumFit, Vec<f64>)> {
    let n_lines = ctx.config.analysis.readout_lines;
    let q0 = ctx.config.analysis.q_t;
    let fit = match io::read_spectrum_csv(path)? {
        Sweep::Complex(freqs, samples) => fit_spectrum(&freqs, &samples, n_lines, q0)?,
        Sweep::Magnitude(freqs, mags) => {
            flags.push("magnitude-only".into());
            fit_spectrum_magnitude(&freqs, &mags, n_lines, q0)?
        }
    };
    if fit.merged {
        flags.push("merged-lines".into());
    }

    let total: f64 = fit.model.weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(CliError::Numerics(format!(
            "fitted line weights sum to {total}; populations are undefined"
        )));
    }
    let populations: Vec<f64> = fit.model.weights.iter().map(|w| w / total).collect();
    Ok((fit, populations))
}

/// Inverts a calibration matrix over measured voltages.
fn from_voltages(voltages_path: &Path, calibration_path: &Path) -> Result<Vec<f64>> {
    let voltages = io::read_voltages_csv(voltages_path)?;
    let calibration = io::read_calibration_json(calibration_path)?;
    let matrix = InversionMatrix::from_real_rows(&calibration.rows)?;
    if matrix.dim() != voltages.len() {
        return Err(CliError::Data(format!(
            "{} voltages for a {}-level calibration",
            voltages.len(),
            matrix.dim()
        )));
    }
    matrix.invert_real(&voltages).map_err(|e| e.into())
}
