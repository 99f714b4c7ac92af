//! Run reports: a deterministic envelope printed to stdout and mirrored
//! into the output directory.
//!
//! Reports carry no timestamps or timings, so two runs over the same config
//! and inputs produce byte-identical output.

use std::path::PathBuf;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io;

/// Stdout format for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Pretty-printed JSON envelope.
    Json,
    /// Flat CSV table of the main results.
    Csv,
}

/// Everything a command needs besides its own arguments.
pub struct Ctx {
    pub config: RunConfig,
    pub config_sha256: String,
    /// Output directory, if reports and artifacts should be written.
    pub out_dir: Option<PathBuf>,
    pub format: Format,
    /// Seed for synthetic data, after any command-line override.
    pub seed: u64,
}

impl Ctx {
    /// Ensures the output directory exists and returns it.
    pub fn artifact_dir(&self) -> Result<&PathBuf> {
        let dir = self.out_dir.as_ref().ok_or_else(|| {
            CliError::Config("an output directory is required (io.out_dir or --out)".into())
        })?;
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

/// The deterministic report envelope.
#[derive(Serialize)]
pub struct Report<T: Serialize> {
    /// Which command produced the report.
    pub command: &'static str,
    /// SHA-256 of the config file the run used.
    pub config_sha256: String,
    /// Input files in processing order.
    pub inputs: Vec<String>,
    /// Command-specific results.
    pub results: T,
}

/// Tabular view of a report for CSV output.
pub struct CsvTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn render(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(&self.header)
            .and_then(|()| {
                for row in &self.rows {
                    writer.write_record(row)?;
                }
                Ok(())
            })
            .map_err(|e| CliError::Data(format!("cannot render CSV: {e}")))?;
        let bytes = writer
            .into_inner()
            .map_err(|e| CliError::Data(format!("cannot render CSV: {e}")))?;
        String::from_utf8(bytes).map_err(|e| CliError::Data(format!("cannot render CSV: {e}")))
    }
}

/// Writes to stdout, treating a closed pipe (e.g. `| head`) as success.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(CliError::Data(format!("cannot write to stdout: {e}"))),
    }
}

/// Prints the report in the chosen format and mirrors the JSON envelope
/// into the output directory when one is set.
pub fn emit<T: Serialize>(ctx: &Ctx, report: &Report<T>, table: &CsvTable) -> Result<()> {
    match ctx.format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(report)
                .map_err(|e| CliError::Data(format!("cannot serialize report: {e}")))?;
            text.push('\n');
            print_stdout(&text)?;
        }
        Format::Csv => print_stdout(&table.render()?)?,
    }
    if let Some(dir) = &ctx.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        io::write_json(&dir.join(format!("{}.json", report.command)), report)?;
    }
    Ok(())
}

/// Formats an optional value for a CSV cell; absent values render empty.
pub fn cell_opt(v: Option<f64>) -> String {
    v.map(io::format_f64).unwrap_or_default()
}
