//! `spectrum`: bare and dressed transition frequencies, dispersive shifts,
//! and charge matrix elements of the configured device.

use serde::Serialize;

use qudit_core::cavity::diagonalize_coupled;
use qudit_core::transmon::{charge_matrix_elements, diagonalize};

use crate::error::Result;
use crate::io::format_f64;
use crate::report::{cell_opt, emit, Ctx, CsvTable, Report};

#[derive(Serialize)]
struct SpectrumResults {
    /// Bare transmon transitions `f_{i,i+1}`, GHz.
    bare_transitions_ghz: Vec<f64>,
    /// Dressed (zero-photon) transitions, GHz; absent where a ladder rung
    /// is missing.
    dressed_transitions_ghz: Vec<Option<f64>>,
    /// Bare anharmonicity `f_12 - f_01`, GHz.
    anharmonicity_ghz: f64,
    /// Dispersive shift per transmon level, MHz; absent for mixed ladders.
    chi_mhz: Vec<Option<f64>>,
    /// Ladders whose dressed states mix with a neighbor.
    mixed_ladders: Vec<usize>,
    /// Squared charge matrix elements `|n_{i,i+1}|²` relative to `|n_01|²`.
    charge_ratio_sq: Vec<f64>,
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let params = ctx.config.transmon();
    let n_transmon = ctx.config.device.n_transmon;
    let spec = diagonalize(&params, n_transmon)?;
    let elements = charge_matrix_elements(&spec);
    let system = diagonalize_coupled(&spec, &elements, &ctx.config.cavity())?;

    let bare_transitions_ghz: Vec<f64> =
        (0..n_transmon - 1).map(|i| spec.transition(i, i + 1)).collect();
    let dressed_transitions_ghz: Vec<Option<f64>> =
        (0..n_transmon - 1).map(|i| system.dressed_transition(i, i + 1)).collect();
    let chi_mhz: Vec<Option<f64>> = system
        .chis()
        .into_iter()
        .map(|chi| chi.map(|c| c * 1e3))
        .collect();
    let mixed_ladders: Vec<usize> =
        (0..n_transmon).filter(|&i| system.ladder_mixed(i)).collect();
    let charge_ratio_sq: Vec<f64> = (0..n_transmon - 1)
        .map(|i| elements.ratio_to_01(i, i + 1).powi(2))
        .collect();

    let results = SpectrumResults {
        anharmonicity_ghz: bare_transitions_ghz[1] - bare_transitions_ghz[0],
        bare_transitions_ghz,
        dressed_transitions_ghz,
        chi_mhz,
        mixed_ladders,
        charge_ratio_sq,
    };

    let rows = (0..n_transmon)
        .map(|i| {
            vec![
                i.to_string(),
                cell_opt(results.chi_mhz[i]),
                cell_opt(results.bare_transitions_ghz.get(i).copied()),
                cell_opt(results.dressed_transitions_ghz.get(i).copied().flatten()),
                results
                    .charge_ratio_sq
                    .get(i)
                    .map(|v| format_f64(*v))
                    .unwrap_or_default(),
            ]
        })
        .collect();
    let table = CsvTable {
        header: vec![
            "level",
            "chi_mhz",
            "bare_next_ghz",
            "dressed_next_ghz",
            "charge_ratio_sq",
        ],
        rows,
    };

    let report = Report {
        command: "spectrum",
        config_sha256: ctx.config_sha256.clone(),
        inputs: Vec::new(),
        results,
    };
    emit(ctx, &report, &table)
}
