//! Run configuration: a strict JSON schema describing the device, the
//! analysis settings, and the input/output layout.
//!
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default. All physical parameters are validated eagerly; a bad config
//! never reaches the solvers.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use qudit_core::cavity::CavityParams;
use qudit_core::transmon::{TransmonParams, DEFAULT_CHARGE_CUTOFF};

use crate::error::{CliError, Result};

/// Top-level run configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Device parameters of the transmon–cavity system.
    pub device: DeviceConfig,
    /// Analysis settings shared by the fitting commands.
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Input files, output directory, and the synthesis seed.
    #[serde(default)]
    pub io: IoConfig,
}

/// Transmon and cavity parameters, in GHz.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    /// Josephson energy, GHz.
    pub e_j_ghz: f64,
    /// Charging energy, GHz.
    pub e_c_ghz: f64,
    /// Offset charge, Cooper pairs.
    #[serde(default = "default_n_g")]
    pub n_g: f64,
    /// Charge-basis cutoff; the basis spans `-cutoff..=cutoff`.
    #[serde(default = "default_charge_cutoff")]
    pub charge_cutoff: usize,
    /// Bare cavity frequency, GHz.
    pub f_c_ghz: f64,
    /// Qubit–cavity coupling on the 0–1 transition, GHz.
    pub g01_ghz: f64,
    /// Cavity linewidth, GHz.
    pub kappa_ghz: f64,
    /// Transmon levels kept in the product system.
    #[serde(default = "default_n_transmon")]
    pub n_transmon: usize,
    /// Resonator Fock states kept in the product system.
    #[serde(default = "default_n_resonator")]
    pub n_resonator: usize,
}

/// Settings for the analysis commands.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Readout integration time, µs.
    #[serde(default = "default_t_read")]
    pub t_read_us: f64,
    /// Known transmission quality factor; fitted when absent.
    #[serde(default)]
    pub q_t: Option<f64>,
    /// Periodogram peak threshold, multiples of the median power.
    #[serde(default = "default_psd_prominence")]
    pub psd_prominence: f64,
    /// Moving-average window for Ramsey background removal, µs.
    #[serde(default = "default_background_window")]
    pub background_window_us: f64,
    /// Number of levels in the decay-rate fit.
    #[serde(default = "default_decay_levels")]
    pub decay_levels: usize,
    /// Number of spectral lines in the readout fit.
    #[serde(default = "default_readout_lines")]
    pub readout_lines: usize,
}

/// Input/output layout.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    /// Input data files; processed in sorted order.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// Output directory for reports and fixtures.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Seed for synthetic-data generation.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_n_g() -> f64 {
    0.5
}
fn default_charge_cutoff() -> usize {
    DEFAULT_CHARGE_CUTOFF
}
fn default_n_transmon() -> usize {
    10
}
fn default_n_resonator() -> usize {
    15
}
fn default_t_read() -> f64 {
    8.0
}
fn default_psd_prominence() -> f64 {
    5.0
}
fn default_background_window() -> f64 {
    10.0
}
fn default_decay_levels() -> usize {
    5
}
fn default_readout_lines() -> usize {
    3
}
fn default_seed() -> u64 {
    7
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            t_read_us: default_t_read(),
            q_t: None,
            psd_prominence: default_psd_prominence(),
            background_window_us: default_background_window(),
            decay_levels: default_decay_levels(),
            readout_lines: default_readout_lines(),
        }
    }
}

/// A loaded and validated configuration plus the digest of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// SHA-256 of the raw config file, hex-encoded.
    pub sha256: String,
}

/// Reads, parses, and validates a configuration file.
pub fn load(path: &Path) -> Result<LoadedConfig> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_slice(&raw)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    let sha256 = hex_digest(&raw);
    Ok(LoadedConfig { config, sha256 })
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    /// Validates every field range; the solvers re-check what they use.
    pub fn validate(&self) -> Result<()> {
        let d = &self.device;
        let positive = [
            ("device.e_j_ghz", d.e_j_ghz),
            ("device.e_c_ghz", d.e_c_ghz),
            ("device.f_c_ghz", d.f_c_ghz),
            ("device.kappa_ghz", d.kappa_ghz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !(d.g01_ghz.is_finite() && d.g01_ghz >= 0.0) {
            return Err(CliError::Config(format!(
                "device.g01_ghz must be finite and non-negative, got {}",
                d.g01_ghz
            )));
        }
        if !d.n_g.is_finite() {
            return Err(CliError::Config("device.n_g must be finite".into()));
        }
        if d.charge_cutoff == 0 {
            return Err(CliError::Config("device.charge_cutoff must be at least 1".into()));
        }
        if d.n_transmon < 2 {
            return Err(CliError::Config("device.n_transmon must be at least 2".into()));
        }
        if d.n_resonator < 2 {
            return Err(CliError::Config("device.n_resonator must be at least 2".into()));
        }

        let a = &self.analysis;
        if !(a.t_read_us.is_finite() && a.t_read_us > 0.0) {
            return Err(CliError::Config(format!(
                "analysis.t_read_us must be finite and positive, got {}",
                a.t_read_us
            )));
        }
        if let Some(q) = a.q_t {
            if !(q.is_finite() && q > 0.0) {
                return Err(CliError::Config(format!(
                    "analysis.q_t must be finite and positive, got {q}"
                )));
            }
        }
        if !(a.psd_prominence.is_finite() && a.psd_prominence >= 0.0) {
            return Err(CliError::Config(format!(
                "analysis.psd_prominence must be finite and non-negative, got {}",
                a.psd_prominence
            )));
        }
        if !(a.background_window_us.is_finite() && a.background_window_us > 0.0) {
            return Err(CliError::Config(format!(
                "analysis.background_window_us must be finite and positive, got {}",
                a.background_window_us
            )));
        }
        if a.decay_levels < 2 {
            return Err(CliError::Config("analysis.decay_levels must be at least 2".into()));
        }
        if a.readout_lines == 0 {
            return Err(CliError::Config("analysis.readout_lines must be at least 1".into()));
        }
        Ok(())
    }

    /// Transmon parameters for the core library.
    pub fn transmon(&self) -> TransmonParams {
        TransmonParams {
            e_j: self.device.e_j_ghz,
            e_c: self.device.e_c_ghz,
            n_g: self.device.n_g,
            charge_cutoff: self.device.charge_cutoff,
        }
    }

    /// Cavity parameters for the core library.
    pub fn cavity(&self) -> CavityParams {
        CavityParams {
            f_c: self.device.f_c_ghz,
            g01: self.device.g01_ghz,
            kappa: self.device.kappa_ghz,
            n_resonator: self.device.n_resonator,
        }
    }

    /// Input paths in deterministic (sorted) processing order.
    pub fn sorted_inputs(&self) -> Vec<PathBuf> {
        let mut inputs = self.io.inputs.clone();
        inputs.sort();
        inputs
    }
}
