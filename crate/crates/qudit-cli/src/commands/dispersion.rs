//! `dispersion`: charge-dispersion amplitude per transition, with an
//! optional comparison against measured parity splittings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qudit_core::ramsey::compare_dispersion;
use qudit_core::transmon::charge_dispersion;

use crate::error::{CliError, Result};
use crate::io::format_f64;
use crate::report::{emit, Ctx, CsvTable, Report};

/// One measured parity splitting, as stored in the `--measured` file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasuredSplitting {
    transition: usize,
    delta_f_mhz: f64,
}

#[derive(Serialize)]
struct ComparisonRow {
    transition: usize,
    measured_mhz: f64,
    simulated_mhz: f64,
    /// `measured / simulated`; not serialized when infinite.
    #[serde(skip_serializing_if = "Option::is_none")]
    fraction: Option<f64>,
    exceeds: bool,
}

#[derive(Serialize)]
struct DispersionResults {
    /// Offset-charge grid for the curves below.
    n_g: Vec<f64>,
    /// Transition-frequency shift from `n_g = 0`, MHz, one curve per
    /// transition.
    shifts_mhz: Vec<Vec<f64>>,
    /// Peak-to-peak dispersion per transition `i -> i+1`, MHz.
    eps_max_mhz: Vec<f64>,
    /// Comparison against measured splittings, when provided.
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Vec<ComparisonRow>>,
}

pub fn run(ctx: &Ctx, measured: Option<&Path>, tolerance: f64) -> Result<()> {
    let params = ctx.config.transmon();
    let n_levels = ctx.config.device.n_transmon;
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 * 0.05).collect();
    let curves = charge_dispersion(&params, n_levels, &grid)?;

    let eps_max_mhz: Vec<f64> = curves.eps_max.iter().map(|e| e * 1e3).collect();
    let shifts_mhz: Vec<Vec<f64>> = curves
        .shifts
        .iter()
        .map(|row| row.iter().map(|s| s * 1e3).collect())
        .collect();

    let comparison = match measured {
        Some(path) => Some(compare(path, &eps_max_mhz, tolerance)?),
        None => None,
    };

    let mut inputs = Vec::new();
    if let Some(path) = measured {
        inputs.push(path.display().to_string());
    }

    let rows = match &comparison {
        Some(rows) => rows
            .iter()
            .map(|r| {
                vec![
                    r.transition.to_string(),
                    format_f64(eps_max_mhz[r.transition]),
                    format_f64(r.measured_mhz),
                    r.fraction.map(format_f64).unwrap_or_else(|| "inf".into()),
                    r.exceeds.to_string(),
                ]
            })
            .collect(),
        None => eps_max_mhz
            .iter()
            .enumerate()
            .map(|(i, e)| vec![i.to_string(), format_f64(*e), String::new(), String::new(), String::new()])
            .collect(),
    };
    let table = CsvTable {
        header: vec!["transition", "eps_max_mhz", "measured_mhz", "fraction", "exceeds"],
        rows,
    };

    let report = Report {
        command: "dispersion",
        config_sha256: ctx.config_sha256.clone(),
        inputs,
        results: DispersionResults {
            n_g: curves.n_g,
            shifts_mhz,
            eps_max_mhz,
            comparison,
        },
    };
    emit(ctx, &report, &table)
}

fn compare(path: &Path, eps_max_mhz: &[f64], tolerance: f64) -> Result<Vec<ComparisonRow>> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let measured: Vec<MeasuredSplitting> = serde_json::from_slice(&raw)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let pairs: Vec<(usize, f64)> = measured
        .iter()
        .map(|m| (m.transition, m.delta_f_mhz))
        .collect();
    let rows = compare_dispersion(&pairs, eps_max_mhz, tolerance)?;
    Ok(rows
        .into_iter()
        .map(|r| ComparisonRow {
            transition: r.transition,
            measured_mhz: r.measured_mhz,
            simulated_mhz: r.simulated_mhz,
            fraction: r.fraction.is_finite().then_some(r.fraction),
            exceeds: r.exceeds,
        })
        .collect())
}
