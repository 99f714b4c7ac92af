//! Multi-tone dispersive readout: cavity transmission, population
//! inversion, and the finite-readout-window decay correction.
//!
//! Each qudit level `i` pulls the cavity to its own frequency `f_i`, so the
//! transmission is a population-weighted sum of complex Lorentzians,
//!
//! ```text
//! S21(f) = Σ_i p_i / (1 + 2i Q_t (f - f_i)/f_i)
//! ```
//!
//! Populations come back out of measured voltages through an inversion
//! matrix built from the same Lorentzians (or loaded from an independent
//! calibration), and are finally corrected for decay during the finite
//! readout window.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::fit::{least_squares, FitOptions};
use crate::{Error, Result};

/// Condition numbers above this make an inversion matrix unusable.
pub const CONDITION_LIMIT: f64 = 1e6;

/// Peak pairs closer than this fraction of a half-width are merged.
const MERGE_FRACTION: f64 = 0.25;

/// Complex Lorentzian line `1 / (1 + 2i Q_t (f - center)/center)`.
pub fn lorentzian(q_t: f64, center: f64, f: f64) -> Complex64 {
    1.0 / Complex64::new(1.0, 2.0 * q_t * (f - center) / center)
}

/// Population-weighted multi-tone transmission model.
#[derive(Debug, Clone)]
pub struct TransmissionModel {
    /// Dressed cavity frequencies per qudit level, GHz.
    pub centers: Vec<f64>,
    /// Level populations (Lorentzian weights).
    pub weights: Vec<f64>,
    /// Total quality factor of the readout cavity.
    pub q_t: f64,
}

impl TransmissionModel {
    /// Rejects structurally or physically invalid models.
    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() || self.centers.len() != self.weights.len() {
            return Err(Error::InvalidData(format!(
                "{} centers for {} weights",
                self.centers.len(),
                self.weights.len()
            )));
        }
        if !self.centers.iter().all(|c| c.is_finite() && *c > 0.0) {
            return Err(Error::InvalidParam {
                name: "centers",
                reason: "must be finite and positive".into(),
            });
        }
        if !self.weights.iter().all(|w| w.is_finite()) {
            return Err(Error::InvalidParam {
                name: "weights",
                reason: "must be finite".into(),
            });
        }
        if !(self.q_t.is_finite() && self.q_t > 0.0) {
            return Err(Error::InvalidParam {
                name: "q_t",
                reason: format!("must be finite and positive, got {}", self.q_t),
            });
        }
        Ok(())
    }

    /// Transmission at one frequency.
    pub fn s21(&self, f: f64) -> Complex64 {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| w * lorentzian(self.q_t, c, f))
            .sum()
    }

    /// Transmission over a frequency sweep.
    pub fn spectrum(&self, freqs: &[f64]) -> Vec<Complex64> {
        freqs.iter().map(|&f| self.s21(f)).collect()
    }

    /// Half width at half maximum of line `i`, GHz.
    pub fn half_width(&self, i: usize) -> f64 {
        self.centers[i] / (2.0 * self.q_t)
    }

    /// Index pairs whose separation is below a quarter of their mean
    /// half-width; such lines cannot be resolved independently.
    pub fn merged_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.centers.len() {
            for j in i + 1..self.centers.len() {
                let sep = (self.centers[i] - self.centers[j]).abs();
                let hw = 0.5 * (self.half_width(i) + self.half_width(j));
                if sep < MERGE_FRACTION * hw {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// How an inversion matrix was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionVariant {
    /// Built from the line shapes at a single probe frequency.
    Spectral,
    /// Built from the line shapes at one probe frequency per level.
    Standard,
    /// Loaded from an independently measured calibration.
    Calibration,
}

/// Square complex matrix mapping populations to measured voltages.
#[derive(Debug, Clone)]
pub struct InversionMatrix {
    m: DMatrix<Complex64>,
    /// Construction used.
    pub variant: InversionVariant,
    /// 2-norm condition number.
    pub condition: f64,
}

impl InversionMatrix {
    fn from_matrix(m: DMatrix<Complex64>, variant: InversionVariant) -> Result<Self> {
        let svd = m.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !condition.is_finite() || condition > CONDITION_LIMIT {
            return Err(Error::IllConditioned {
                condition,
                limit: CONDITION_LIMIT,
            });
        }
        Ok(Self {
            m,
            variant,
            condition,
        })
    }

    /// Builds a calibration matrix from real row-major entries.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidData("calibration matrix must be square".into()));
        }
        let m = DMatrix::from_fn(n, n, |r, c| Complex64::new(rows[r][c], 0.0));
        Self::from_matrix(m, InversionVariant::Calibration)
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Matrix entries.
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    /// Applies the forward map: voltages from populations.
    pub fn voltages(&self, p: &[f64]) -> Result<Vec<Complex64>> {
        if p.len() != self.dim() {
            return Err(Error::InvalidData(format!(
                "{} populations for a {}-state matrix",
                p.len(),
                self.dim()
            )));
        }
        let pv = nalgebra::DVector::from_iterator(
            p.len(),
            p.iter().map(|&x| Complex64::new(x, 0.0)),
        );
        Ok((&self.m * pv).iter().copied().collect())
    }

    /// Recovers raw populations from measured voltages.
    pub fn invert(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.dim() {
            return Err(Error::InvalidData(format!(
                "{} voltages for a {}-state matrix",
                v.len(),
                self.dim()
            )));
        }
        let rhs = nalgebra::DVector::from_column_slice(v);
        let solved = self
            .m
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::IllConditioned {
                condition: f64::INFINITY,
                limit: CONDITION_LIMIT,
            })?;
        Ok(solved.iter().copied().collect())
    }

    /// Inversion for real voltages (calibration matrices); returns the real
    /// parts, which is exact when the matrix itself is real.
    pub fn invert_real(&self, v: &[f64]) -> Result<Vec<f64>> {
        let cv: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Ok(self.invert(&cv)?.iter().map(|c| c.re).collect())
    }
}

/// Spectral inversion matrix probed at the level-0 cavity frequency.
///
/// Row `r`, column `c` holds the Lorentzian of line `c+1` for `c < r`, of
/// line `c` for `c > r`, and the on-resonance value (exactly one) on the
/// diagonal — the pattern produced by mapping each level's population to the
/// level-0 line with a depopulation sequence before readout.
pub fn spectral_inversion(centers: &[f64], q_t: f64) -> Result<InversionMatrix> {
    let n = centers.len();
    if n < 2 {
        return Err(Error::InvalidData("need at least two readout lines".into()));
    }
    let probe = centers[0];
    let m = DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            lorentzian(q_t, centers[0], probe)
        } else if c < r {
            lorentzian(q_t, centers[c + 1], probe)
        } else {
            lorentzian(q_t, centers[c], probe)
        }
    });
    InversionMatrix::from_matrix(m, InversionVariant::Spectral)
}

/// Plain multi-probe inversion: row per probe frequency, column per level,
/// `M[k][i] = L_i(f_k)`.
pub fn standard_inversion(centers: &[f64], probes: &[f64], q_t: f64) -> Result<InversionMatrix> {
    if centers.len() != probes.len() || centers.is_empty() {
        return Err(Error::InvalidData(
            "need as many probe frequencies as readout lines".into(),
        ));
    }
    let n = centers.len();
    let m = DMatrix::from_fn(n, n, |k, i| lorentzian(q_t, centers[i], probes[k]));
    InversionMatrix::from_matrix(m, InversionVariant::Standard)
}

/// Correction for relaxation during the readout window.
#[derive(Debug, Clone, Copy)]
pub struct ReadoutCorrection {
    /// Acquisition window, µs.
    pub t_read: f64,
    /// Single-excitation decay rate `Γ_10`, µs⁻¹.
    pub gamma10: f64,
}

impl ReadoutCorrection {
    /// Rejects unusable window or rate values.
    pub fn validate(&self) -> Result<()> {
        if !(self.t_read.is_finite() && self.t_read > 0.0) {
            return Err(Error::InvalidParam {
                name: "t_read",
                reason: format!("must be finite and positive, got {}", self.t_read),
            });
        }
        if !(self.gamma10.is_finite() && self.gamma10 >= 0.0) {
            return Err(Error::InvalidParam {
                name: "gamma10",
                reason: format!("must be finite and non-negative, got {}", self.gamma10),
            });
        }
        Ok(())
    }

    /// Window-averaged survival factor `(1 - e^{-Γ10 T}) / (Γ10 T)`.
    ///
    /// Tends to one for an instantaneous window and decreases monotonically
    /// with `Γ10 T`; a short series keeps it exact near zero.
    pub fn lambda_bar(&self) -> f64 {
        let x = self.gamma10 * self.t_read;
        if x < 1e-8 {
            1.0 - x / 2.0 + x * x / 6.0
        } else {
            (1.0 - (-x).exp()) / x
        }
    }

    /// Applies the decay correction to raw populations and renormalizes.
    ///
    /// The excited-level estimates lose a factor `Λ̄` into the level-0 line
    /// during acquisition; the corrected vector moves that weight back and
    /// is rescaled to unit total.
    pub fn apply(&self, p_star: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        if p_star.len() < 2 {
            return Err(Error::InvalidData("need at least two populations".into()));
        }
        let excess = 1.0 / self.lambda_bar() - 1.0;
        let mut p: Vec<f64> = p_star.to_vec();
        p[0] = p_star[0] - p_star[1] * excess;
        for i in 1..p.len() {
            p[i] = p_star[i] - p_star[0] * excess;
        }
        let total: f64 = p.iter().sum();
        if total.abs() < 1e-12 {
            return Err(Error::InvalidData(
                "corrected populations sum to zero; cannot normalize".into(),
            ));
        }
        Ok(p.iter().map(|v| v / total).collect())
    }
}

/// Fitted multi-tone transmission spectrum.
#[derive(Debug, Clone)]
pub struct SpectrumFit {
    /// Best-fit model.
    pub model: TransmissionModel,
    /// `sqrt` of the summed squared residuals (real and imaginary stacked).
    pub residual_norm: f64,
    /// True when any pair of fitted lines is unresolvably close.
    pub merged: bool,
}

/// Fits `n_peaks` complex Lorentzians plus a shared quality factor to a
/// measured spectrum.
///
/// Initial centers and weights come from the strongest local maxima of the
/// magnitude; `q0` overrides the width-based quality-factor estimate.
pub fn fit_spectrum(
    freqs: &[f64],
    samples: &[Complex64],
    n_peaks: usize,
    q0: Option<f64>,
) -> Result<SpectrumFit> {
    check_sweep(freqs, samples.len(), n_peaks)?;
    let mags: Vec<f64> = samples.iter().map(|c| c.norm()).collect();
    let x0 = initial_guess(freqs, &mags, n_peaks, q0);

    let fit = least_squares(
        |x| {
            let model = model_from_params(x, n_peaks);
            freqs
                .iter()
                .zip(samples)
                .flat_map(|(&f, &s)| {
                    let d = model.s21(f) - s;
                    [d.re, d.im]
                })
                .collect()
        },
        &x0,
        &FitOptions::default(),
    )?;

    let model = model_from_params(&fit.x, n_peaks);
    model.validate()?;
    let merged = !model.merged_pairs().is_empty();
    Ok(SpectrumFit {
        model,
        residual_norm: fit.residual_norm,
        merged,
    })
}

/// Magnitude-only variant of [`fit_spectrum`], for comparing against the
/// complex-plane fit.
pub fn fit_spectrum_magnitude(
    freqs: &[f64],
    mags: &[f64],
    n_peaks: usize,
    q0: Option<f64>,
) -> Result<SpectrumFit> {
    check_sweep(freqs, mags.len(), n_peaks)?;
    let x0 = initial_guess(freqs, mags, n_peaks, q0);

    let fit = least_squares(
        |x| {
            let model = model_from_params(x, n_peaks);
            freqs
                .iter()
                .zip(mags)
                .map(|(&f, &m)| model.s21(f).norm() - m)
                .collect()
        },
        &x0,
        &FitOptions::default(),
    )?;

    let model = model_from_params(&fit.x, n_peaks);
    model.validate()?;
    let merged = !model.merged_pairs().is_empty();
    Ok(SpectrumFit {
        model,
        residual_norm: fit.residual_norm,
        merged,
    })
}

/// Validates a frequency sweep for fitting.
fn check_sweep(freqs: &[f64], n_samples: usize, n_peaks: usize) -> Result<()> {
    if n_peaks == 0 {
        return Err(Error::InvalidParam {
            name: "n_peaks",
            reason: "must fit at least one line".into(),
        });
    }
    if freqs.len() != n_samples {
        return Err(Error::InvalidData(format!(
            "{} frequencies for {n_samples} samples",
            freqs.len()
        )));
    }
    if freqs.len() < 5 * n_peaks {
        return Err(Error::InvalidData(format!(
            "{} samples cannot resolve {n_peaks} lines (need ≥ {})",
            freqs.len(),
            5 * n_peaks
        )));
    }
    if !freqs.iter().all(|f| f.is_finite() && *f > 0.0) {
        return Err(Error::InvalidData("frequencies must be finite and positive".into()));
    }
    Ok(())
}

/// Parameter layout: `[w_0.., c_0.., sqrt(q_t)]`.
fn model_from_params(x: &[f64], n_peaks: usize) -> TransmissionModel {
    let sq = x[2 * n_peaks];
    TransmissionModel {
        weights: x[..n_peaks].to_vec(),
        centers: x[n_peaks..2 * n_peaks].to_vec(),
        q_t: sq * sq,
    }
}

/// Seeds the fit from the most prominent magnitude maxima and a width-based
/// quality-factor estimate.
///
/// The magnitude is lightly smoothed and candidate maxima are ranked by
/// prominence with a minimum mutual separation, so measurement noise on a
/// strong line cannot consume the starting centers meant for weaker lines.
fn initial_guess(freqs: &[f64], mags: &[f64], n_peaks: usize, q0: Option<f64>) -> Vec<f64> {
    let min_sep = (freqs.len() / (4 * n_peaks)).max(1);
    let smooth = smoothed(mags, min_sep / 4);

    let mut candidates: Vec<usize> = (1..smooth.len() - 1)
        .filter(|&k| smooth[k] >= smooth[k - 1] && smooth[k] > smooth[k + 1])
        .collect();
    candidates.sort_by(|&a, &b| prominence(&smooth, b).total_cmp(&prominence(&smooth, a)));

    let mut maxima: Vec<usize> = Vec::with_capacity(n_peaks);
    for k in candidates {
        if maxima.iter().all(|&m| k.abs_diff(m) >= min_sep) {
            maxima.push(k);
            if maxima.len() == n_peaks {
                break;
            }
        }
    }

    // Fall back to evenly spread starting centers if maxima are missing.
    while maxima.len() < n_peaks {
        let k = (maxima.len() + 1) * freqs.len() / (n_peaks + 1);
        maxima.push(k.min(freqs.len() - 1));
    }
    maxima.sort_unstable();

    let q_est = q0.unwrap_or_else(|| estimate_q(freqs, &smooth, maxima[0]));
    let mut x0 = Vec::with_capacity(2 * n_peaks + 1);
    for &k in &maxima {
        x0.push(smooth[k]);
    }
    for &k in &maxima {
        x0.push(freqs[k]);
    }
    x0.push(q_est.max(1.0).sqrt());
    x0
}

/// Centered moving average with edge clamping; `half = 0` is the identity.
fn smoothed(mags: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return mags.to_vec();
    }
    (0..mags.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(mags.len() - 1);
            mags[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Height of maximum `k` above the deeper of the two valleys separating it
/// from higher ground.
fn prominence(mags: &[f64], k: usize) -> f64 {
    let mut left = mags[k];
    for j in (0..k).rev() {
        left = left.min(mags[j]);
        if mags[j] > mags[k] {
            break;
        }
    }
    let mut right = mags[k];
    for j in k + 1..mags.len() {
        right = right.min(mags[j]);
        if mags[j] > mags[k] {
            break;
        }
    }
    mags[k] - left.max(right)
}

/// Quality factor from the half-power width around the strongest maximum.
fn estimate_q(freqs: &[f64], mags: &[f64], peak: usize) -> f64 {
    let half = mags[peak] / std::f64::consts::SQRT_2;
    let mut lo = peak;
    while lo > 0 && mags[lo] > half {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < mags.len() && mags[hi] > half {
        hi += 1;
    }
    let width = (freqs[hi] - freqs[lo]).abs();
    if width > 0.0 {
        freqs[peak] / width
    } else {
        // Unresolved line: assume it is much narrower than the sweep.
        let span = freqs[freqs.len() - 1] - freqs[0];
        10.0 * freqs[peak] / span.abs().max(f64::MIN_POSITIVE)
    }
}
