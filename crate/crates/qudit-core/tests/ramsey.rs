//! Tests for the Ramsey module: synthesis, background removal, periodogram
//! properties, fringe fitting across parity-splitting regimes, and the
//! dispersion comparison.

use qudit_core::ramsey::{
    compare_dispersion, fit_fringes, periodogram, remove_background, synthesize, FringeModel,
    RamseyTrace, PAD_FACTOR,
};
use qudit_core::Error;

fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tol,
        "{what}: got {actual}, expected {expected} (tol {tol})"
    );
}

/// Standard acquisition grid: 1024 samples every 0.1 µs.
fn grid() -> Vec<f64> {
    (0..1024).map(|k| k as f64 * 0.1).collect()
}

fn model(f_a: f64, delta_f: f64, t2: f64) -> FringeModel {
    FringeModel {
        amplitude: 1.0,
        t2,
        f_a,
        delta_f,
        phi1: 0.0,
        phi2: 0.0,
    }
}

/// Background-removed PSD with the default prominence factor used in tests.
fn analyze(trace: &RamseyTrace) -> (RamseyTrace, qudit_core::ramsey::Psd) {
    let removed = remove_background(trace, 10.0).unwrap();
    let psd = periodogram(&removed, 5.0).unwrap();
    (removed, psd)
}

/// A synthesized fringe is already zero-mean; marking it background-free
/// keeps exactness checks from absorbing moving-average distortion.
fn without_background(trace: &RamseyTrace) -> (RamseyTrace, qudit_core::ramsey::Psd) {
    let marked = RamseyTrace {
        background_removed: true,
        ..trace.clone()
    };
    let psd = periodogram(&marked, 5.0).unwrap();
    (marked, psd)
}

#[test]
fn zero_splitting_without_decay_is_a_pure_cosine() {
    let m = model(0.5, 0.0, f64::INFINITY);
    let times = grid();
    let trace = synthesize(&m, &times, 0.0, 0).unwrap();
    let tau = std::f64::consts::TAU;
    for (&t, &y) in times.iter().zip(&trace.amplitude) {
        assert_close(y, 2.0 * (tau * 0.5 * t).cos(), 1e-12, &format!("y({t})"));
    }
    assert!(!trace.background_removed);
}

#[test]
fn synthesis_is_deterministic_per_seed() {
    let m = model(0.5, 0.1, 40.0);
    let times = grid();
    let a = synthesize(&m, &times, 0.04, 9).unwrap();
    let b = synthesize(&m, &times, 0.04, 9).unwrap();
    assert_eq!(a.amplitude, b.amplitude, "same seed, same noise");
    let c = synthesize(&m, &times, 0.04, 10).unwrap();
    assert!(a.amplitude != c.amplitude, "different seed, different noise");

    assert!(synthesize(&m, &times, -0.1, 0).is_err(), "negative noise rejected");
    let bad = FringeModel { t2: -5.0, ..m };
    assert!(synthesize(&bad, &times, 0.0, 0).is_err(), "negative T2 rejected");
}

#[test]
fn background_removal_preserves_fringes_and_kills_drift() {
    let m = model(0.5, 0.0, f64::INFINITY);
    let times = grid();
    let clean = synthesize(&m, &times, 0.0, 0).unwrap();

    // A zero-mean fringe passes through nearly unchanged.
    let removed = remove_background(&clean, 10.0).unwrap();
    assert!(removed.background_removed);
    let rms: f64 =
        (clean.amplitude.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64).sqrt();
    let diff: f64 = (clean
        .amplitude
        .iter()
        .zip(&removed.amplitude)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / clean.len() as f64)
        .sqrt();
    assert!(diff < 0.01 * rms, "fringe distorted by {diff} (rms {rms})");

    // A slow additive drift is taken out.
    let drifted: Vec<f64> = times
        .iter()
        .zip(&clean.amplitude)
        .map(|(&t, &y)| y + 0.5 + 0.01 * t)
        .collect();
    let drifted = RamseyTrace::new(times.clone(), drifted).unwrap();
    let recovered = remove_background(&drifted, 10.0).unwrap();
    let resid: f64 = (clean
        .amplitude
        .iter()
        .zip(&recovered.amplitude)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / clean.len() as f64)
        .sqrt();
    assert!(resid < 0.02 * rms, "drift left {resid} (rms {rms})");

    // A constant trace becomes (numerically) zero.
    let flat = RamseyTrace::new(times.clone(), vec![0.7; times.len()]).unwrap();
    let removed = remove_background(&flat, 10.0).unwrap();
    assert!(removed.amplitude.iter().all(|v| v.abs() < 1e-12));

    // Windows longer than the record are refused.
    assert!(remove_background(&clean, 1e4).is_err());
    assert!(remove_background(&clean, -1.0).is_err());
}

#[test]
fn periodogram_satisfies_parseval() {
    let m = model(0.7, 0.4, 25.0);
    let trace = synthesize(&m, &grid(), 0.04, 3).unwrap();
    let (removed, psd) = analyze(&trace);
    let time_energy: f64 = removed.amplitude.iter().map(|v| v * v).sum();
    let freq_energy: f64 = psd.power.iter().sum();
    assert!(
        (time_energy - freq_energy).abs() <= 1e-9 * time_energy,
        "Parseval: {time_energy} vs {freq_energy}"
    );
    assert_eq!(psd.freqs.len(), (PAD_FACTOR * 1024) / 2 + 1);
    assert_close(psd.bin_width, 1.0 / (PAD_FACTOR as f64 * 1024.0 * 0.1), 1e-15, "bin width");
}

#[test]
fn peaks_land_on_the_true_tones() {
    // Single tone.
    let trace = synthesize(&model(0.5, 0.0, f64::INFINITY), &grid(), 0.0, 0).unwrap();
    let (_, psd) = analyze(&trace);
    let strong = psd.strong_peaks();
    assert_eq!(strong.len(), 1, "one strong tone expected");
    assert!(
        (strong[0].freq - 0.5).abs() <= psd.bin_width,
        "tone at {} vs 0.5",
        strong[0].freq
    );

    // Two well-split tones.
    let trace = synthesize(&model(1.1, 2.5, 12.0), &grid(), 0.0, 0).unwrap();
    let (_, psd) = analyze(&trace);
    let strong = psd.strong_peaks();
    assert_eq!(strong.len(), 2, "two strong tones expected");
    let mut freqs: Vec<f64> = strong.iter().map(|p| p.freq).collect();
    freqs.sort_by(f64::total_cmp);
    assert!((freqs[0] - 1.1).abs() <= psd.bin_width, "lower tone at {}", freqs[0]);
    assert!((freqs[1] - 3.6).abs() <= psd.bin_width, "upper tone at {}", freqs[1]);
}

#[test]
fn constant_signal_has_no_candidates() {
    let times = grid();
    let flat = RamseyTrace::new(times.clone(), vec![0.3; times.len()]).unwrap();
    let removed = remove_background(&flat, 10.0).unwrap();
    let psd = periodogram(&removed, 5.0).unwrap();
    assert!(psd.candidates.is_empty(), "flat trace has no peaks");
    assert!(psd.strong_peaks().is_empty());
    match fit_fringes(&removed, &psd) {
        Err(Error::NoPeaks) => {}
        other => panic!("expected NoPeaks, got {other:?}"),
    }
}

#[test]
fn candidate_structure_is_invariant_under_amplitude_scaling() {
    let trace = synthesize(&model(0.9, 0.6, 30.0), &grid(), 0.02, 17).unwrap();
    let (removed, psd) = analyze(&trace);
    let scaled = RamseyTrace::new(
        removed.times.clone(),
        removed.amplitude.iter().map(|v| 2.0 * v).collect(),
    )
    .unwrap();
    let scaled = RamseyTrace {
        background_removed: true,
        ..scaled
    };
    let psd2 = periodogram(&scaled, 5.0).unwrap();

    let idx: Vec<usize> = psd.candidates.iter().map(|p| p.index).collect();
    let idx2: Vec<usize> = psd2.candidates.iter().map(|p| p.index).collect();
    assert_eq!(idx, idx2, "same candidates");
    for (a, b) in psd.candidates.iter().zip(&psd2.candidates) {
        assert_close(b.height, 4.0 * a.height, 1e-9 * b.height.abs(), "power scales by 4");
    }
    assert_eq!(psd.strong_peaks().len(), psd2.strong_peaks().len());
}

#[test]
fn noiseless_two_tone_fit_recovers_the_model_exactly() {
    let truth = model(0.504, 0.093, 32.0);
    let trace = synthesize(&truth, &grid(), 0.0, 0).unwrap();
    let (marked, psd) = without_background(&trace);
    let fit = fit_fringes(&marked, &psd).unwrap();
    assert!(!fit.single_tone);
    assert!(fit.residual_norm < 1e-7, "noiseless residual {}", fit.residual_norm);
    assert_close(fit.model.f_a, truth.f_a, 1e-6, "f_a");
    assert_close(fit.model.delta_f, truth.delta_f, 1e-6, "delta_f");
    assert!((fit.model.t2 - truth.t2).abs() / truth.t2 < 1e-6, "t2 {}", fit.model.t2);
    assert_close(fit.model.amplitude, truth.amplitude, 1e-6, "amplitude");
}

#[test]
fn single_strong_tone_pins_the_splitting_to_zero() {
    let truth = model(0.379, 0.0, 72.0);
    let trace = synthesize(&truth, &grid(), 0.0, 0).unwrap();
    let (marked, psd) = without_background(&trace);
    let fit = fit_fringes(&marked, &psd).unwrap();
    assert!(fit.single_tone, "one strong peak takes the pinned path");
    assert_eq!(fit.model.delta_f, 0.0, "splitting pinned to exactly zero");
    assert_eq!(fit.model.phi1, fit.model.phi2, "shared phase");
    assert_close(fit.model.f_a, truth.f_a, 1e-6, "f_a");
    assert!((fit.model.t2 - truth.t2).abs() / truth.t2 < 1e-5, "t2 {}", fit.model.t2);
}

#[test]
fn noisy_parity_states_round_trip_within_protocol() {
    // Three working points: unresolved splitting, a narrow resolved
    // splitting, and a wide one.
    let states = [
        (0.379, 0.0, 72.0),
        (0.504, 0.093, 32.0),
        (1.1, 2.5, 12.0),
    ];
    for (k, &(f_a, delta_f, t2)) in states.iter().enumerate() {
        let truth = model(f_a, delta_f, t2);
        let trace = synthesize(&truth, &grid(), 0.04, 100 + k as u64).unwrap();
        let (removed, psd) = analyze(&trace);
        let fit = fit_fringes(&removed, &psd)
            .unwrap_or_else(|e| panic!("state {k} failed: {e:?}"));

        assert!(
            (fit.model.t2 - t2).abs() / t2 < 0.2,
            "state {k}: T2 {} vs {t2}",
            fit.model.t2
        );
        assert!(
            (fit.model.f_a - f_a).abs() <= psd.bin_width,
            "state {k}: f_a {} vs {f_a}",
            fit.model.f_a
        );
        if delta_f == 0.0 {
            assert!(fit.single_tone, "state {k} should be single-tone");
            assert_eq!(fit.model.delta_f, 0.0);
        } else {
            assert!(!fit.single_tone, "state {k} should be two-tone");
            assert!(
                (fit.model.delta_f - delta_f).abs() <= psd.bin_width,
                "state {k}: delta_f {} vs {delta_f}",
                fit.model.delta_f
            );
        }
    }
}

#[test]
fn four_tones_are_refused() {
    // Two parity doublets from two transitions at once: four strong tones.
    let times = grid();
    let tau = std::f64::consts::TAU;
    let tones = [0.4, 0.9, 1.8, 2.6];
    let amplitude: Vec<f64> = times
        .iter()
        .map(|&t| {
            let envelope = (-t / 30.0f64).exp();
            envelope * tones.iter().map(|&f| (tau * f * t).cos()).sum::<f64>()
        })
        .collect();
    let trace = RamseyTrace::new(times, amplitude).unwrap();
    let removed = remove_background(&trace, 10.0).unwrap();
    let psd = periodogram(&removed, 5.0).unwrap();
    assert_eq!(psd.strong_peaks().len(), 4);
    match fit_fringes(&removed, &psd) {
        Err(Error::MultiFrequency { count: 4 }) => {}
        other => panic!("expected MultiFrequency {{ count: 4 }}, got {other:?}"),
    }
}

#[test]
fn fit_survives_a_seed_sweep_across_working_points() {
    // Twenty synthetic working points spanning the protocol ranges; at
    // least eighteen must round-trip within tolerance.
    let times: Vec<f64> = (0..1280).map(|k| k as f64 * 0.08).collect();
    let t2_pool = [8.0, 15.0, 25.0, 40.0, 60.0, 75.0, 90.0, 100.0];
    let fa_pool = [0.25, 0.5, 0.9, 1.3, 1.7, 2.0];
    let df_pool = [0.0, 0.1, 0.35, 0.8, 1.5, 2.4, 2.9];

    let mut successes = 0;
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let t2 = t2_pool[seed as usize % t2_pool.len()];
        let f_a = fa_pool[seed as usize % fa_pool.len()];
        let delta_f = df_pool[seed as usize % df_pool.len()];
        let truth = model(f_a, delta_f, t2);
        let trace = synthesize(&truth, &times, 0.04, seed).unwrap();
        let removed = remove_background(&trace, 10.0).unwrap();
        let psd = periodogram(&removed, 5.0).unwrap();

        let ok = match fit_fringes(&removed, &psd) {
            Ok(fit) => {
                let t2_ok = fit.model.t2.is_finite() && (fit.model.t2 - t2).abs() / t2 < 0.2;
                let fa_ok = (fit.model.f_a - f_a).abs() <= psd.bin_width;
                let df_ok = if delta_f == 0.0 {
                    fit.single_tone
                } else {
                    !fit.single_tone && (fit.model.delta_f - delta_f).abs() <= psd.bin_width
                };
                t2_ok && fa_ok && df_ok
            }
            Err(_) => false,
        };
        if ok {
            successes += 1;
        } else {
            failures.push(seed);
        }
    }
    assert!(
        successes >= 18,
        "only {successes}/20 working points round-tripped (failed seeds {failures:?})"
    );
}

#[test]
fn dispersion_comparison_flags_only_excess_splittings() {
    // Simulated per-transition maximum dispersions, MHz.
    let simulated = [0.0025, 0.0894, 1.865, 25.3];
    let measured = [(0usize, 0.002), (1, 0.09), (2, 1.2), (3, 30.0)];

    let rows = compare_dispersion(&measured, &simulated, 0.05).unwrap();
    assert_eq!(rows.len(), 4);
    for (row, &(transition, value)) in rows.iter().zip(&measured) {
        assert_eq!(row.transition, transition);
        assert_close(row.measured_mhz, value, 1e-15, "measured");
        assert_close(row.simulated_mhz, simulated[transition], 1e-15, "simulated");
        assert_close(
            row.fraction,
            value / simulated[transition],
            1e-12,
            "fraction",
        );
    }
    assert!(!rows[0].exceeds, "0.8 of simulated is fine");
    assert!(!rows[1].exceeds, "within 5% tolerance");
    assert!(!rows[2].exceeds, "well below simulated");
    assert!(rows[3].exceeds, "1.19× the simulated maximum is flagged");

    // Tolerance zero flags the marginal row too.
    let strict = compare_dispersion(&measured, &simulated, 0.0).unwrap();
    assert!(strict[1].exceeds, "1.0067× exceeds at zero tolerance");

    // Negative simulated values compare by magnitude.
    let rows = compare_dispersion(&[(0, 0.002)], &[-0.0025], 0.0).unwrap();
    assert_close(rows[0].fraction, 0.8, 1e-12, "fraction vs |simulated|");
    assert!(!rows[0].exceeds);

    // Zero simulated dispersion: only a zero measurement is consistent.
    let rows = compare_dispersion(&[(0, 0.0), (1, 0.01)], &[0.0, 0.0], 0.05).unwrap();
    assert_eq!(rows[0].fraction, 0.0);
    assert!(!rows[0].exceeds);
    assert!(rows[1].fraction.is_infinite());
    assert!(rows[1].exceeds);

    assert!(compare_dispersion(&[(7, 0.1)], &simulated, 0.05).is_err(), "missing transition");
    assert!(compare_dispersion(&measured, &simulated, -0.1).is_err(), "negative tolerance");
    assert!(compare_dispersion(&measured, &simulated, f64::NAN).is_err(), "NaN tolerance");
    assert!(compare_dispersion(&[(0, -0.1)], &simulated, 0.0).is_err(), "negative measurement");
}

#[test]
fn traces_and_analysis_inputs_are_validated() {
    assert!(RamseyTrace::new(vec![0.0, 0.1], vec![0.0, 0.0]).is_err(), "too short");
    assert!(
        RamseyTrace::new(vec![0.0, 0.1, 0.2, 0.3], vec![0.0; 3]).is_err(),
        "length mismatch"
    );
    assert!(
        RamseyTrace::new(vec![0.0, 0.1, 0.3, 0.4], vec![0.0; 4]).is_err(),
        "non-uniform grid"
    );
    assert!(
        RamseyTrace::new(vec![0.0, 0.1, 0.2, 0.3], vec![0.0, f64::NAN, 0.0, 0.0]).is_err(),
        "non-finite amplitude"
    );

    let trace = synthesize(&model(0.5, 0.0, 20.0), &grid(), 0.0, 0).unwrap();
    assert!(
        matches!(periodogram(&trace, 5.0), Err(Error::InvalidData(_))),
        "periodogram requires background removal"
    );
    let removed = remove_background(&trace, 10.0).unwrap();
    assert!(periodogram(&removed, -1.0).is_err(), "negative prominence factor");
    assert!(
        matches!(fit_fringes(&trace, &periodogram(&removed, 5.0).unwrap()), Err(Error::InvalidData(_))),
        "fit requires background removal"
    );

    let short = RamseyTrace::new(
        vec![0.0, 0.1, 0.2, 0.3],
        vec![0.1, 0.2, 0.1, 0.0],
    )
    .unwrap();
    let short = remove_background(&short, 0.2).unwrap();
    assert!(periodogram(&short, 5.0).is_err(), "too short for a periodogram");
}
