//! Ramsey fringe analysis: synthesis, background removal, periodogram peak
//! finding, time-domain fitting, and the charge-dispersion comparison.
//!
//! At a fixed offset-charge working point the qubit precession frequency
//! takes one of two values depending on the quasiparticle parity, so a
//! Ramsey fringe carries two tones separated by `Δf`:
//!
//! ```text
//! y(t) = A e^{-t/T2} [cos(2π f_A t + φ1) + cos(2π (f_A+Δf) t + φ2)]
//! ```
//!
//! This module works in µs and MHz, which makes `f·t` dimensionless.
//! Fitting is always seeded from the periodogram; when only one strong tone
//! is present, `Δf` is pinned to zero with a shared phase so that the beat
//! envelope cannot trade against the exponential decay.

use rand::SeedableRng;
use rand_distr::Distribution;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::fit::{least_squares, FitOptions};
use crate::{Error, Result};

/// Zero-padding factor applied before the FFT.
pub const PAD_FACTOR: usize = 4;

/// Candidate peaks must reach this fraction of the top height to be strong.
const STRONG_HEIGHT_FRACTION: f64 = 0.10;

/// …and this fraction of the top height in prominence.
const STRONG_PROMINENCE_FRACTION: f64 = 0.05;

/// Two-tone Ramsey fringe model; times in µs, frequencies in MHz.
#[derive(Debug, Clone, Copy)]
pub struct FringeModel {
    /// Per-tone amplitude.
    pub amplitude: f64,
    /// Dephasing time, µs (`f64::INFINITY` for no decay).
    pub t2: f64,
    /// Lower precession frequency, MHz.
    pub f_a: f64,
    /// Parity splitting, MHz.
    pub delta_f: f64,
    /// Phase of the lower tone, rad.
    pub phi1: f64,
    /// Phase of the upper tone, rad.
    pub phi2: f64,
}

impl FringeModel {
    /// Fringe value at time `t` (µs).
    pub fn eval(&self, t: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        let envelope = self.amplitude * (-t / self.t2).exp();
        envelope
            * ((tau * self.f_a * t + self.phi1).cos()
                + (tau * (self.f_a + self.delta_f) * t + self.phi2).cos())
    }

    /// Rejects non-finite or unphysical model parameters.
    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidParam {
                name: "amplitude",
                reason: "must be finite".into(),
            });
        }
        if self.t2 <= 0.0 || self.t2.is_nan() {
            return Err(Error::InvalidParam {
                name: "t2",
                reason: format!("must be positive, got {}", self.t2),
            });
        }
        for (name, v) in [
            ("f_a", self.f_a),
            ("delta_f", self.delta_f),
            ("phi1", self.phi1),
            ("phi2", self.phi2),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParam {
                    name,
                    reason: "must be finite".into(),
                });
            }
        }
        Ok(())
    }
}

/// A uniformly sampled Ramsey record.
#[derive(Debug, Clone)]
pub struct RamseyTrace {
    /// Delay times, µs, uniform and strictly increasing.
    pub times: Vec<f64>,
    /// Measured (or synthesized) fringe amplitude per delay.
    pub amplitude: Vec<f64>,
    /// Set once the slow background has been subtracted.
    pub background_removed: bool,
}

impl RamseyTrace {
    /// Builds a trace, enforcing a uniform time grid.
    pub fn new(times: Vec<f64>, amplitude: Vec<f64>) -> Result<Self> {
        if times.len() != amplitude.len() || times.len() < 4 {
            return Err(Error::InvalidData(format!(
                "trace needs ≥ 4 matched samples, got {} times / {} values",
                times.len(),
                amplitude.len()
            )));
        }
        if times.iter().chain(amplitude.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("trace contains non-finite entries".into()));
        }
        let dt = times[1] - times[0];
        if dt <= 0.0 {
            return Err(Error::InvalidData("times must increase".into()));
        }
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1e-30) {
                return Err(Error::InvalidData(
                    "trace must be uniformly sampled".into(),
                ));
            }
        }
        Ok(Self {
            times,
            amplitude,
            background_removed: false,
        })
    }

    /// Sample spacing, µs.
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    /// True when the trace holds no samples (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Synthesizes a fringe record on `times` with white Gaussian noise.
pub fn synthesize(
    model: &FringeModel,
    times: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<RamseyTrace> {
    model.validate()?;
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidParam {
            name: "noise_sigma",
            reason: format!("must be finite and non-negative, got {noise_sigma}"),
        });
    }
    let mut amplitude: Vec<f64> = times.iter().map(|&t| model.eval(t)).collect();
    if noise_sigma > 0.0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0, noise_sigma).expect("validated sigma");
        for v in &mut amplitude {
            *v += normal.sample(&mut rng);
        }
    }
    RamseyTrace::new(times.to_vec(), amplitude)
}

/// Subtracts a moving-average background of fixed width `window_us`.
///
/// The averaging window keeps its full width everywhere: near the edges its
/// position is clamped instead of shrinking, which avoids bending the first
/// and last oscillations. A window as long as the whole trace reduces to
/// subtracting the global mean.
pub fn remove_background(trace: &RamseyTrace, window_us: f64) -> Result<RamseyTrace> {
    if !(window_us.is_finite() && window_us > 0.0) {
        return Err(Error::InvalidParam {
            name: "window_us",
            reason: format!("must be finite and positive, got {window_us}"),
        });
    }
    let m = trace.len();
    let w = (window_us / trace.dt()).round() as usize;
    let w = w.max(1);
    if w > m {
        return Err(Error::InvalidData(format!(
            "background window of {w} samples exceeds the {m}-sample trace"
        )));
    }

    // Prefix sums make every clamped window mean O(1).
    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(0.0);
    for &v in &trace.amplitude {
        prefix.push(prefix.last().unwrap() + v);
    }

    let half = w / 2;
    let mut amplitude: Vec<f64> = (0..m)
        .map(|k| {
            let start = k.saturating_sub(half).min(m - w);
            let mean = (prefix[start + w] - prefix[start]) / w as f64;
            trace.amplitude[k] - mean
        })
        .collect();

    // A trace the window explains completely leaves only prefix-sum rounding
    // dust (~1e-15 of the raw scale). Snap that to exact zeros so downstream
    // peak hunts, which use relative thresholds, see an empty spectrum rather
    // than structure in the rounding noise.
    let scale = trace.amplitude.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if amplitude.iter().all(|v| v.abs() <= 1e-12 * scale) {
        amplitude.iter_mut().for_each(|v| *v = 0.0);
    }

    Ok(RamseyTrace {
        times: trace.times.clone(),
        amplitude,
        background_removed: true,
    })
}

/// One periodogram peak.
#[derive(Debug, Clone, Copy)]
pub struct Peak {
    /// Bin index in the padded spectrum.
    pub index: usize,
    /// Bin frequency, MHz.
    pub freq: f64,
    /// Power at the bin.
    pub height: f64,
    /// Topographic prominence of the bin.
    pub prominence: f64,
}

/// One-sided power spectral density with candidate peaks.
#[derive(Debug, Clone)]
pub struct Psd {
    /// Bin frequencies, MHz.
    pub freqs: Vec<f64>,
    /// One-sided power per bin; summing it reproduces `Σ y²` exactly.
    pub power: Vec<f64>,
    /// Frequency resolution of the padded grid, MHz.
    pub bin_width: f64,
    /// Local maxima whose prominence clears the median threshold, sorted by
    /// height, strongest first.
    pub candidates: Vec<Peak>,
}

impl Psd {
    /// Candidates that are strong: at least 10% of the top height and 5% of
    /// the top height in prominence.
    pub fn strong_peaks(&self) -> Vec<&Peak> {
        let top = match self.candidates.first() {
            Some(p) => p.height,
            None => return Vec::new(),
        };
        self.candidates
            .iter()
            .filter(|p| {
                p.height >= STRONG_HEIGHT_FRACTION * top
                    && p.prominence >= STRONG_PROMINENCE_FRACTION * top
            })
            .collect()
    }
}

/// One-sided periodogram of a background-removed trace, zero-padded by
/// [`PAD_FACTOR`], with peak candidates above `prominence_factor` times the
/// median power.
pub fn periodogram(trace: &RamseyTrace, prominence_factor: f64) -> Result<Psd> {
    if !trace.background_removed {
        return Err(Error::InvalidData(
            "remove the background before the periodogram".into(),
        ));
    }
    if !(prominence_factor.is_finite() && prominence_factor >= 0.0) {
        return Err(Error::InvalidParam {
            name: "prominence_factor",
            reason: format!("must be finite and non-negative, got {prominence_factor}"),
        });
    }
    let m = trace.len();
    if m < 8 {
        return Err(Error::InvalidData("trace too short for a periodogram".into()));
    }

    let padded = PAD_FACTOR * m;
    let mut buf: Vec<Complex64> = trace
        .amplitude
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)).take(padded - m))
        .collect();
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);

    let n_bins = padded / 2 + 1;
    let dt = trace.dt();
    let bin_width = 1.0 / (padded as f64 * dt);
    let mut power = Vec::with_capacity(n_bins);
    let mut freqs = Vec::with_capacity(n_bins);
    for k in 0..n_bins {
        // One-sided scaling: interior bins carry their mirror's power too.
        let c = if k == 0 || (padded % 2 == 0 && k == padded / 2) {
            1.0
        } else {
            2.0
        };
        power.push(c * buf[k].norm_sqr() / padded as f64);
        freqs.push(k as f64 * bin_width);
    }

    let candidates = find_candidates(&freqs, &power, prominence_factor);
    Ok(Psd {
        freqs,
        power,
        bin_width,
        candidates,
    })
}

/// Local maxima (skipping the DC-adjacent bins) with prominence above
/// `factor` times the median power, sorted by height descending.
fn find_candidates(freqs: &[f64], power: &[f64], factor: f64) -> Vec<Peak> {
    let n = power.len();
    let mut sorted = power.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let threshold = factor * median;

    let mut peaks: Vec<Peak> = (2..n.saturating_sub(1))
        .filter(|&k| power[k] >= power[k - 1] && power[k] > power[k + 1])
        .map(|k| Peak {
            index: k,
            freq: freqs[k],
            height: power[k],
            prominence: prominence(power, k),
        })
        .filter(|p| p.prominence >= threshold && p.prominence > 0.0)
        .collect();
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
    peaks
}

/// Topographic prominence: height above the higher of the two bases reached
/// before a taller bin (or the spectrum edge) on each side.
fn prominence(power: &[f64], k: usize) -> f64 {
    let h = power[k];
    let mut left_min = h;
    let mut i = k;
    while i > 0 {
        i -= 1;
        if power[i] > h {
            break;
        }
        left_min = left_min.min(power[i]);
    }
    let mut right_min = h;
    let mut j = k;
    while j + 1 < power.len() {
        j += 1;
        if power[j] > h {
            break;
        }
        right_min = right_min.min(power[j]);
    }
    h - left_min.max(right_min)
}

/// A converged fringe fit.
#[derive(Debug, Clone)]
pub struct RamseyFit {
    /// Best-fit fringe model with `delta_f ≥ 0` and `t2 > 0`.
    pub model: FringeModel,
    /// `sqrt` of the summed squared residuals.
    pub residual_norm: f64,
    /// True when the periodogram had one strong tone and `Δf` was pinned to
    /// zero with a shared phase.
    pub single_tone: bool,
}

/// Fits the two-tone fringe model to a background-removed trace, seeded by
/// the periodogram peaks.
///
/// Exactly one strong peak selects the pinned single-tone variant; two
/// strong peaks seed the full model; more than two is a refusal
/// ([`Error::MultiFrequency`]) and none is [`Error::NoPeaks`]. The decay
/// rate is carried as a square root internally so `T2` stays positive.
pub fn fit_fringes(trace: &RamseyTrace, psd: &Psd) -> Result<RamseyFit> {
    if !trace.background_removed {
        return Err(Error::InvalidData(
            "remove the background before fitting fringes".into(),
        ));
    }
    let strong = psd.strong_peaks();
    match strong.len() {
        0 => Err(Error::NoPeaks),
        1 => fit_single_tone(trace, strong[0]),
        2 => fit_two_tone(trace, strong[0], strong[1]),
        count => Err(Error::MultiFrequency { count }),
    }
}

/// Pinned variant: `Δf = 0`, shared phase, four free parameters.
fn fit_single_tone(trace: &RamseyTrace, peak: &Peak) -> Result<RamseyFit> {
    let span = trace.times[trace.len() - 1] - trace.times[0];
    let amax = trace.amplitude.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let x0 = [0.5 * amax, (2.0 / span).sqrt(), peak.freq, 0.0];

    let times = trace.times.clone();
    let data = trace.amplitude.clone();
    let fit = least_squares(
        |x| {
            let tau = std::f64::consts::TAU;
            times
                .iter()
                .zip(&data)
                .map(|(&t, &y)| {
                    2.0 * x[0] * (-x[1] * x[1] * t).exp() * (tau * x[2] * t + x[3]).cos() - y
                })
                .collect()
        },
        &x0,
        &FitOptions::default(),
    )?;

    let model = normalize(FringeModel {
        amplitude: fit.x[0],
        t2: invert_rate(fit.x[1]),
        f_a: fit.x[2],
        delta_f: 0.0,
        phi1: fit.x[3],
        phi2: fit.x[3],
    });
    Ok(RamseyFit {
        model,
        residual_norm: fit.residual_norm,
        single_tone: true,
    })
}

/// Full six-parameter two-tone fit.
fn fit_two_tone(trace: &RamseyTrace, a: &Peak, b: &Peak) -> Result<RamseyFit> {
    let (lo, hi) = if a.freq <= b.freq { (a, b) } else { (b, a) };
    let span = trace.times[trace.len() - 1] - trace.times[0];
    let amax = trace.amplitude.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let x0 = [
        0.5 * amax,
        (2.0 / span).sqrt(),
        lo.freq,
        hi.freq - lo.freq,
        0.0,
        0.0,
    ];

    let times = trace.times.clone();
    let data = trace.amplitude.clone();
    let fit = least_squares(
        |x| {
            let model = FringeModel {
                amplitude: x[0],
                t2: invert_rate(x[1]),
                f_a: x[2],
                delta_f: x[3],
                phi1: x[4],
                phi2: x[5],
            };
            times.iter().zip(&data).map(|(&t, &y)| model.eval(t) - y).collect()
        },
        &x0,
        &FitOptions::default(),
    )?;

    let model = normalize(FringeModel {
        amplitude: fit.x[0],
        t2: invert_rate(fit.x[1]),
        f_a: fit.x[2],
        delta_f: fit.x[3],
        phi1: fit.x[4],
        phi2: fit.x[5],
    });
    Ok(RamseyFit {
        model,
        residual_norm: fit.residual_norm,
        single_tone: false,
    })
}

/// `T2` from the square-root rate parameter, saturating at infinity.
fn invert_rate(s: f64) -> f64 {
    let rate = s * s;
    if rate < 1e-12 {
        f64::INFINITY
    } else {
        1.0 / rate
    }
}

/// Canonical form: positive amplitude, `f_a ≥ 0`, `delta_f ≥ 0`, phases in
/// `(-π, π]`.
fn normalize(mut m: FringeModel) -> FringeModel {
    if m.delta_f < 0.0 {
        // Swap the two tones.
        m.f_a += m.delta_f;
        m.delta_f = -m.delta_f;
        std::mem::swap(&mut m.phi1, &mut m.phi2);
    }
    if m.f_a < 0.0 && m.f_a + m.delta_f <= 0.0 {
        // Both tones negative: reflect using cos(-x) = cos(x).
        m.f_a = -(m.f_a + m.delta_f);
        m.phi1 = -m.phi1;
        m.phi2 = -m.phi2;
        std::mem::swap(&mut m.phi1, &mut m.phi2);
    }
    if m.amplitude < 0.0 {
        m.amplitude = -m.amplitude;
        m.phi1 += std::f64::consts::PI;
        m.phi2 += std::f64::consts::PI;
    }
    m.phi1 = wrap_phase(m.phi1);
    m.phi2 = wrap_phase(m.phi2);
    m
}

/// Wraps into `(-π, π]`.
fn wrap_phase(phi: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut p = phi.rem_euclid(tau);
    if p > std::f64::consts::PI {
        p -= tau;
    }
    p
}

/// One row of the measured-vs-simulated dispersion comparison.
#[derive(Debug, Clone, Copy)]
pub struct DispersionComparison {
    /// Adjacent transition index (`i` for `i → i+1`).
    pub transition: usize,
    /// Measured parity splitting `Δf`, MHz.
    pub measured_mhz: f64,
    /// Simulated peak-to-peak charge dispersion, MHz.
    pub simulated_mhz: f64,
    /// `measured / |simulated|`.
    pub fraction: f64,
    /// True when the measured splitting exceeds the simulated maximum (plus
    /// tolerance), which the fixed-parity model cannot produce.
    pub exceeds: bool,
}

/// Compares measured parity splittings against simulated maximum
/// dispersions (`eps_max`, MHz, indexed by adjacent transition).
///
/// A row is flagged when `measured > |simulated| · (1 + tolerance)`.
pub fn compare_dispersion(
    measured: &[(usize, f64)],
    simulated_eps_max_mhz: &[f64],
    tolerance: f64,
) -> Result<Vec<DispersionComparison>> {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(Error::InvalidParam {
            name: "tolerance",
            reason: format!("must be finite and non-negative, got {tolerance}"),
        });
    }
    measured
        .iter()
        .map(|&(transition, delta_f)| {
            let simulated = *simulated_eps_max_mhz.get(transition).ok_or_else(|| {
                Error::InvalidData(format!(
                    "no simulated dispersion for transition {transition}"
                ))
            })?;
            if !(delta_f.is_finite() && delta_f >= 0.0) {
                return Err(Error::InvalidData(format!(
                    "measured splitting must be non-negative, got {delta_f}"
                )));
            }
            let simulated_abs = simulated.abs();
            let fraction = if simulated_abs > 0.0 {
                delta_f / simulated_abs
            } else if delta_f == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(DispersionComparison {
                transition,
                measured_mhz: delta_f,
                simulated_mhz: simulated_abs,
                fraction,
                exceeds: fraction > 1.0 + tolerance,
            })
        })
        .collect()
}
