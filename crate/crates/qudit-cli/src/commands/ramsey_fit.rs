//! `ramsey-fit`: background removal, periodogram peak finding, and fringe
//! fitting per input record.
//!
//! Records with no significant peaks or with more than two tones are
//! reported with a flag rather than treated as failures: a flat trace or a
//! multi-frequency spectrum is an answer, not an error.

use serde::Serialize;

use qudit_core::ramsey::{fit_fringes, periodogram, remove_background};
use qudit_core::Error as CoreError;

use crate::error::{CliError, Result};
use crate::io;
use crate::report::{cell_opt, emit, Ctx, CsvTable, Report};

#[derive(Serialize)]
struct RamseyEntry {
    input: String,
    /// Decoherence time, µs; absent when no decay was resolved or the fit
    /// was refused.
    #[serde(skip_serializing_if = "Option::is_none")]
    t2_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f_a_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_f_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_norm: Option<f64>,
    single_tone: bool,
    flags: Vec<String>,
}

impl RamseyEntry {
    fn refused(input: String, flag: String) -> Self {
        RamseyEntry {
            input,
            t2_us: None,
            f_a_mhz: None,
            delta_f_mhz: None,
            amplitude: None,
            residual_norm: None,
            single_tone: false,
            flags: vec![flag],
        }
    }
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let inputs = ctx.config.sorted_inputs();
    if inputs.is_empty() {
        return Err(CliError::Config(
            "ramsey-fit needs fringe records in io.inputs".into(),
        ));
    }
    let window = ctx.config.analysis.background_window_us;
    let prominence = ctx.config.analysis.psd_prominence;

    let mut entries = Vec::with_capacity(inputs.len());
    for path in &inputs {
        let name = path.display().to_string();
        let trace = io::read_ramsey_csv(path)?;
        let removed = remove_background(&trace, window)?;
        let psd = periodogram(&removed, prominence)?;
        let entry = match fit_fringes(&removed, &psd) {
            Ok(fit) => RamseyEntry {
                input: name,
                t2_us: fit.model.t2.is_finite().then_some(fit.model.t2),
                f_a_mhz: Some(fit.model.f_a),
                delta_f_mhz: Some(fit.model.delta_f),
                amplitude: Some(fit.model.amplitude),
                residual_norm: Some(fit.residual_norm),
                single_tone: fit.single_tone,
                flags: Vec::new(),
            },
            Err(CoreError::NoPeaks) => RamseyEntry::refused(name, "no-peaks".into()),
            Err(CoreError::MultiFrequency { count }) => {
                RamseyEntry::refused(name, format!("multi-frequency ({count} tones)"))
            }
            Err(e) => return Err(e.into()),
        };
        entries.push(entry);
    }

    let rows = entries
        .iter()
        .map(|e| {
            vec![
                e.input.clone(),
                cell_opt(e.t2_us),
                cell_opt(e.f_a_mhz),
                cell_opt(e.delta_f_mhz),
                e.single_tone.to_string(),
                e.flags.join("; "),
            ]
        })
        .collect();
    let table = CsvTable {
        header: vec!["input", "t2_us", "f_a_mhz", "delta_f_mhz", "single_tone", "flags"],
        rows,
    };

    let report = Report {
        command: "ramsey-fit",
        config_sha256: ctx.config_sha256.clone(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        results: entries,
    };
    emit(ctx, &report, &table)
}
