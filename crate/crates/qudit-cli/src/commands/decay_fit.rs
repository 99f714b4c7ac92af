//! `decay-fit`: sequential-iterative decay-rate fitting over a set of
//! population traces, one CSV per initial level.

use std::collections::BTreeMap;

use serde::Serialize;

use qudit_core::decay::{fit_rates, scaling_check, RateFit};

use crate::error::{CliError, Result};
use crate::io::{self, format_f64, RatesFile};
use crate::report::{emit, Ctx, CsvTable, Report};

#[derive(Serialize)]
struct ScalingResults {
    /// `Γ_10 / Γ_{i,i-1}` per sequential channel.
    ratios: Vec<f64>,
    /// Log–log slope of `Γ_{i,i-1}` against `i`.
    slope: f64,
}

#[derive(Serialize)]
struct DecayResults {
    rates_per_us: BTreeMap<String, f64>,
    inverse_rates_us: BTreeMap<String, f64>,
    stderr_per_us: BTreeMap<String, f64>,
    flags: Vec<String>,
    residual_norm: f64,
    scaling: ScalingResults,
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let inputs = ctx.config.sorted_inputs();
    if inputs.is_empty() {
        return Err(CliError::Config(
            "decay-fit needs population traces in io.inputs".into(),
        ));
    }
    let n_levels = ctx.config.analysis.decay_levels;

    let mut traces = Vec::with_capacity(inputs.len());
    for path in &inputs {
        let trace = io::read_decay_csv(path)?;
        if trace.n_levels() != n_levels {
            return Err(CliError::Data(format!(
                "{} has {} levels; analysis.decay_levels is {n_levels}",
                path.display(),
                trace.n_levels()
            )));
        }
        traces.push(trace);
    }

    let fit = fit_rates(&traces, n_levels)?;
    let results = build_results(&fit);

    if let Some(dir) = &ctx.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        let artifact = RatesFile {
            rates_per_us: results.rates_per_us.clone(),
            inverse_rates_us: results.inverse_rates_us.clone(),
            stderr_per_us: results.stderr_per_us.clone(),
            flags: results.flags.clone(),
            residual_norm: Some(results.residual_norm),
        };
        io::write_json(&dir.join("rates.json"), &artifact)?;
    }

    let rows = fit
        .entries
        .iter()
        .map(|e| {
            vec![
                e.from.to_string(),
                e.to.to_string(),
                format_f64(e.rate),
                if e.rate > 0.0 {
                    format_f64(1.0 / e.rate)
                } else {
                    String::new()
                },
                format_f64(e.stderr),
                e.unconstrained.to_string(),
            ]
        })
        .collect();
    let table = CsvTable {
        header: vec!["from", "to", "rate_per_us", "inverse_us", "stderr_per_us", "unconstrained"],
        rows,
    };

    let report = Report {
        command: "decay-fit",
        config_sha256: ctx.config_sha256.clone(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        results,
    };
    emit(ctx, &report, &table)
}

fn build_results(fit: &RateFit) -> DecayResults {
    let mut rates_per_us = BTreeMap::new();
    let mut inverse_rates_us = BTreeMap::new();
    let mut stderr_per_us = BTreeMap::new();
    let mut flags = Vec::new();
    for e in &fit.entries {
        let key = format!("g{}{}", e.from, e.to);
        rates_per_us.insert(key.clone(), e.rate);
        if e.rate > 0.0 {
            inverse_rates_us.insert(key.clone(), 1.0 / e.rate);
        }
        stderr_per_us.insert(key.clone(), e.stderr);
        if e.unconstrained {
            flags.push(format!("{key} unconstrained"));
        }
    }
    let check = scaling_check(&fit.rates);
    DecayResults {
        rates_per_us,
        inverse_rates_us,
        stderr_per_us,
        flags,
        residual_norm: fit.residual_norm,
        scaling: ScalingResults {
            ratios: check.ratios,
            slope: check.slope,
        },
    }
}
