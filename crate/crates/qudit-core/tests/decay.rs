//! Tests for the decay module: exact propagation against closed forms and a
//! Runge–Kutta oracle, conservation and composition properties, and the
//! sequential-iterative rate fit.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qudit_core::decay::{
    evolve, fit_rates, scaling_check, synthesize_trace, PopulationTrace, Provenance, RateMatrix,
};

fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tol,
        "{what}: got {actual}, expected {expected} (tol {tol})"
    );
}

/// Reference device: five levels, four sequential lifetimes and three
/// direct-to-lower lifetimes, all in µs.
fn reference_rates() -> RateMatrix {
    RateMatrix::from_inverse_times(
        5,
        &[
            (1, 0, 84.0),
            (2, 1, 41.0),
            (3, 2, 30.0),
            (4, 3, 22.0),
            (2, 0, 1812.0),
            (3, 1, 1314.0),
            (3, 0, 2631.0),
        ],
    )
    .unwrap()
}

/// Classic fixed-step RK4 for dp/dt = A p.
fn rk4(a: &DMatrix<f64>, p0: &[f64], t_end: f64, dt: f64) -> Vec<f64> {
    let mut p = DVector::from_column_slice(p0);
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        let k1 = a * &p;
        let k2 = a * (&p + &k1 * (dt / 2.0));
        let k3 = a * (&p + &k2 * (dt / 2.0));
        let k4 = a * (&p + &k3 * dt);
        p += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0);
    }
    p.iter().copied().collect()
}

#[test]
fn two_level_decay_matches_closed_form() {
    let rates = RateMatrix::from_inverse_times(2, &[(1, 0, 84.0)]).unwrap();
    let times: Vec<f64> = (0..=100).map(|k| k as f64 * 3.0).collect();
    let trace = evolve(&rates, &[0.0, 1.0], &times).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let p1 = (-t / 84.0).exp();
        assert_close(trace.populations[k][1], p1, 1e-12, "p1(t)");
        assert_close(trace.populations[k][0], 1.0 - p1, 1e-12, "p0(t)");
    }
    assert_eq!(
        trace.provenance,
        Provenance::Synthetic {
            seed: 0,
            noise_sigma: 0.0
        }
    );
}

#[test]
fn cascade_matches_runge_kutta_oracle() {
    let rates = reference_rates();
    let a = rates.generator();
    let p0 = [0.0, 0.0, 0.0, 0.0, 1.0];

    // Independently frozen RK4 references (dt = 1e-3) for the same cascade.
    let frozen: [(f64, [f64; 5]); 3] = [
        (
            10.0,
            [
                0.00097263830437303281,
                0.0058834203966343741,
                0.053455266970460873,
                0.30495225538824811,
                0.63473641894027832,
            ],
        ),
        (
            50.0,
            [
                0.052071553656053197,
                0.19579317754036463,
                0.33709357535343853,
                0.31201088998837345,
                0.10303080346176413,
            ],
        ),
        (
            100.0,
            [
                0.25328768583542638,
                0.39784329221463094,
                0.25044395172493872,
                0.087809723763020778,
                0.010615346461976656,
            ],
        ),
    ];

    for (t, expected) in &frozen {
        let trace = evolve(&rates, &p0, &[*t]).unwrap();
        let integrated = rk4(&a, &p0, *t, 1e-3);
        let mut total = 0.0;
        for l in 0..5 {
            assert_close(
                trace.populations[0][l],
                expected[l],
                1e-6,
                &format!("p{l}({t}) vs frozen RK4"),
            );
            assert_close(
                trace.populations[0][l],
                integrated[l],
                1e-6,
                &format!("p{l}({t}) vs in-test RK4"),
            );
            total += trace.populations[0][l];
        }
        assert_close(total, 1.0, 1e-9, "population total");
    }
}

#[test]
fn degenerate_outflows_use_matrix_exponential_correctly() {
    // Levels 1 and 2 have identical total outflow (0.05 µs⁻¹), so the
    // generator's diagonal is degenerate and the eigendecomposition path
    // is unavailable.
    let rates =
        RateMatrix::from_rates(3, &[(1, 0, 0.05), (2, 1, 0.03), (2, 0, 0.02)]).unwrap();
    let frozen: [(f64, [f64; 3]); 2] = [
        (
            5.0,
            [
                0.10437909946788415,
                0.11682011746071083,
                0.77880078307140532,
            ],
        ),
        (
            20.0,
            [
                0.41139289412569474,
                0.22072766470286559,
                0.36787944117144178,
            ],
        ),
    ];
    for (t, expected) in &frozen {
        let trace = evolve(&rates, &[0.0, 0.0, 1.0], &[*t]).unwrap();
        for l in 0..3 {
            assert_close(trace.populations[0][l], expected[l], 1e-8, &format!("p{l}({t})"));
        }
        // The top level only drains, at the shared outflow rate.
        assert_close(
            trace.populations[0][2],
            (-0.05 * t).exp(),
            1e-8,
            "p2 closed form",
        );
    }
}

#[test]
fn ground_state_absorbs_everything() {
    let rates = reference_rates();
    let times: Vec<f64> = (0..=50).map(|k| k as f64 * 100.0).collect();
    let trace = evolve(&rates, &[0.0, 0.0, 0.0, 0.0, 1.0], &times).unwrap();
    let mut prev = 0.0;
    for row in &trace.populations {
        assert!(row[0] >= prev - 1e-12, "ground population must not decrease");
        prev = row[0];
    }
    let last = trace.populations.last().unwrap();
    assert!(last[0] > 1.0 - 1e-9, "everything relaxes to the ground state");
}

#[test]
fn evolve_rejects_bad_initial_vectors_and_times() {
    let rates = reference_rates();
    assert!(evolve(&rates, &[1.0, 0.0, 0.0], &[1.0]).is_err(), "wrong width");
    assert!(
        evolve(&rates, &[0.5, 0.5, 0.0, 0.0, 0.1], &[1.0]).is_err(),
        "unnormalized"
    );
    assert!(
        evolve(&rates, &[-0.1, 1.1, 0.0, 0.0, 0.0], &[1.0]).is_err(),
        "negative entry"
    );
    assert!(
        evolve(&rates, &[1.0, 0.0, 0.0, 0.0, 0.0], &[-1.0]).is_err(),
        "negative time"
    );
    assert!(
        evolve(&rates, &[1.0, 0.0, 0.0, 0.0, 0.0], &[f64::NAN]).is_err(),
        "non-finite time"
    );
}

#[test]
fn rate_matrix_rejects_upward_and_negative_rates() {
    assert!(RateMatrix::new(1).is_err(), "single level");
    let mut m = RateMatrix::new(3).unwrap();
    assert!(m.set(0, 1, 0.1).is_err(), "upward rate");
    assert!(m.set(1, 1, 0.1).is_err(), "self rate");
    assert!(m.set(3, 0, 0.1).is_err(), "level out of range");
    assert!(m.set(2, 0, -0.1).is_err(), "negative rate");
    assert!(m.set(2, 0, f64::INFINITY).is_err(), "non-finite rate");
    assert!(
        RateMatrix::from_inverse_times(3, &[(1, 0, 0.0)]).is_err(),
        "zero lifetime"
    );
    m.set(2, 0, 0.25).unwrap();
    assert_eq!(m.rate(2, 0), 0.25);
    assert_eq!(m.rate(2, 1), 0.0);
    assert_close(m.total_outflow(2), 0.25, 1e-15, "outflow");
}

#[test]
fn trace_validation_enforces_structure_and_ranges() {
    let good = PopulationTrace {
        times: vec![0.0, 1.0, 2.0],
        populations: vec![vec![0.0, 1.0], vec![0.3, 0.7], vec![0.5, 0.5]],
        provenance: Provenance::Synthetic {
            seed: 1,
            noise_sigma: 0.0,
        },
    };
    assert!(good.validate().is_ok());

    let mut bad = good.clone();
    bad.times[2] = 1.0;
    assert!(bad.validate().is_err(), "non-increasing times");

    let mut bad = good.clone();
    bad.populations[1] = vec![0.3];
    assert!(bad.validate().is_err(), "ragged rows");

    // Noiseless output must stay normalized to machine accuracy…
    let mut bad = good.clone();
    bad.populations[1] = vec![0.3, 0.71];
    assert!(bad.validate().is_err(), "noiseless row sum off by 1e-2");

    // …while measured data only has to stay near the physical range.
    let mut measured = good.clone();
    measured.provenance = Provenance::Measured;
    measured.populations[1] = vec![-0.04, 1.04];
    assert!(measured.validate().is_ok(), "measurement noise margin");
    measured.populations[1] = vec![-0.2, 1.0];
    assert!(measured.validate().is_err(), "unphysical measurement");
}

#[test]
fn synthesized_noiseless_traces_satisfy_strict_validation() {
    let rates = reference_rates();
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 2.0).collect();
    for level in 1..5 {
        let trace = synthesize_trace(&rates, level, &times, 0.0, 42).unwrap();
        trace.validate().unwrap();
        assert_eq!(
            trace.provenance,
            Provenance::Synthetic {
                seed: 42,
                noise_sigma: 0.0
            }
        );
    }
}

#[test]
fn noiseless_fit_recovers_every_rate() {
    let truth = reference_rates();
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 2.0).collect();
    let traces: Vec<PopulationTrace> = (1..5)
        .map(|level| synthesize_trace(&truth, level, &times, 0.0, 0).unwrap())
        .collect();

    let fit = fit_rates(&traces, 5).unwrap();
    for i in 1..5 {
        for j in 0..i {
            let expected = truth.rate(i, j);
            let got = fit.rates.rate(i, j);
            if expected > 0.0 {
                assert!(
                    (got - expected).abs() / expected < 1e-6,
                    "rate ({i},{j}): got {got}, expected {expected}"
                );
            } else {
                assert!(got.abs() < 1e-6, "rate ({i},{j}) should vanish, got {got}");
            }
        }
    }
    assert!(fit.residual_norm < 1e-6, "noiseless residual {}", fit.residual_norm);
}

#[test]
fn noisy_fit_recovers_rates_within_protocol_tolerances() {
    let truth = reference_rates();
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 2.0).collect();
    let traces: Vec<PopulationTrace> = (1..5)
        .map(|level| synthesize_trace(&truth, level, &times, 0.01, 7 + level as u64).unwrap())
        .collect();

    let fit = fit_rates(&traces, 5).unwrap();
    for entry in &fit.entries {
        let expected = truth.rate(entry.from, entry.to);
        if expected == 0.0 {
            continue;
        }
        let rel = (entry.rate - expected).abs() / expected;
        if entry.to + 1 == entry.from {
            assert!(
                rel < 0.02,
                "sequential ({},{}) off by {:.2}%",
                entry.from,
                entry.to,
                100.0 * rel
            );
            assert!(
                !entry.unconstrained,
                "sequential ({},{}) flagged unconstrained",
                entry.from,
                entry.to
            );
        } else {
            assert!(
                rel < 0.5 || entry.unconstrained,
                "skip ({},{}) off by {:.2}% and not flagged",
                entry.from,
                entry.to,
                100.0 * rel
            );
        }
    }
}

#[test]
fn missing_channel_is_reported_unconstrained() {
    // Same cascade but with the 3→0 channel switched off: the fit drives it
    // to zero and the sensitivity audit reports that the data do not react
    // to it, while every real channel stays unflagged.
    let truth = RateMatrix::from_inverse_times(
        4,
        &[
            (1, 0, 84.0),
            (2, 1, 41.0),
            (3, 2, 30.0),
            (2, 0, 1812.0),
            (3, 1, 1314.0),
        ],
    )
    .unwrap();
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 2.0).collect();
    let traces: Vec<PopulationTrace> = (1..4)
        .map(|level| synthesize_trace(&truth, level, &times, 0.0, 0).unwrap())
        .collect();

    let fit = fit_rates(&traces, 4).unwrap();
    let absent = fit
        .entries
        .iter()
        .find(|e| e.from == 3 && e.to == 0)
        .unwrap();
    assert!(absent.rate < 1e-8, "absent channel fitted to {}", absent.rate);
    assert!(absent.unconstrained, "absent channel must be flagged");
    for entry in &fit.entries {
        if truth.rate(entry.from, entry.to) > 0.0 {
            assert!(
                !entry.unconstrained,
                "real channel ({},{}) flagged unconstrained",
                entry.from,
                entry.to
            );
        }
    }
}

#[test]
fn fit_rates_rejects_malformed_inputs() {
    let rates = reference_rates();
    let times: Vec<f64> = (0..=50).map(|k| k as f64 * 4.0).collect();
    let traces: Vec<PopulationTrace> = (1..5)
        .map(|level| synthesize_trace(&rates, level, &times, 0.0, 0).unwrap())
        .collect();

    assert!(fit_rates(&traces[..3], 5).is_err(), "trace count mismatch");
    assert!(fit_rates(&traces, 1).is_err(), "single level");

    let mut corrupted = traces.clone();
    corrupted[1].times[3] = corrupted[1].times[2];
    assert!(fit_rates(&corrupted, 5).is_err(), "invalid trace rejected");
}

#[test]
fn direct_channels_matter_for_early_ground_arrival() {
    // Fit a four-level cascade, then zero the fitted direct-to-lower
    // channels: the sequential-only model must describe the early ground
    // population from |3⟩ distinctly worse than the full model.
    let truth = RateMatrix::from_inverse_times(
        4,
        &[
            (1, 0, 84.0),
            (2, 1, 41.0),
            (3, 2, 30.0),
            (2, 0, 1812.0),
            (3, 1, 1314.0),
            (3, 0, 2631.0),
        ],
    )
    .unwrap();
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 2.0).collect();
    let traces: Vec<PopulationTrace> = (1..4)
        .map(|level| synthesize_trace(&truth, level, &times, 0.0, 0).unwrap())
        .collect();
    let fit = fit_rates(&traces, 4).unwrap();

    let mut sequential_only = RateMatrix::new(4).unwrap();
    for i in 1..4 {
        sequential_only.set(i, i - 1, fit.rates.rate(i, i - 1)).unwrap();
    }

    let early: Vec<f64> = times.iter().copied().filter(|&t| t < 70.0).collect();
    let p0 = [0.0, 0.0, 0.0, 1.0];
    let reference = evolve(&truth, &p0, &early).unwrap();
    let full = evolve(&fit.rates, &p0, &early).unwrap();
    let seq = evolve(&sequential_only, &p0, &early).unwrap();

    let ssr = |model: &PopulationTrace| -> f64 {
        model
            .populations
            .iter()
            .zip(&reference.populations)
            .map(|(m, r)| (m[0] - r[0]) * (m[0] - r[0]))
            .sum()
    };
    let ssr_full = ssr(&full);
    let ssr_seq = ssr(&seq);
    assert!(ssr_full < 1e-10, "full model should track truth, SSR {ssr_full}");
    assert!(
        ssr_seq > 100.0 * ssr_full.max(1e-12),
        "dropping direct channels should hurt: {ssr_seq} vs {ssr_full}"
    );
    assert!(ssr_seq > 1e-4, "direct channels are material early on: {ssr_seq}");
}

#[test]
fn scaling_check_reports_harmonic_ratios() {
    let rates = reference_rates();
    let check = scaling_check(&rates);
    let expected = [1.0, 84.0 / (2.0 * 41.0), 84.0 / (3.0 * 30.0), 84.0 / (4.0 * 22.0)];
    assert_eq!(check.ratios.len(), 4);
    for (k, (&got, &want)) in check.ratios.iter().zip(&expected).enumerate() {
        assert_close(got, want, 1e-12, &format!("ratio {}", k + 1));
    }
    let num: f64 = (1..5).map(|i| i as f64 * rates.rate(i, i - 1)).sum();
    let den: f64 = (1..5).map(|i| (i * i) as f64).sum();
    assert_close(check.slope, num / den, 1e-15, "slope");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Total population is conserved and no level goes negative, on either
    /// propagation path.
    #[test]
    fn evolution_conserves_population(
        n in 2usize..=6,
        grid in prop::collection::vec(5u32..=100, 15),
        t_scale in 1u32..=50,
    ) {
        let mut rates = RateMatrix::new(n).unwrap();
        let mut k = 0;
        for i in 1..n {
            for j in 0..i {
                rates.set(i, j, grid[k] as f64 / 100.0).unwrap();
                k += 1;
            }
        }
        let mut p0 = vec![0.0; n];
        p0[n - 1] = 1.0;
        let times: Vec<f64> = (0..=10).map(|m| m as f64 * t_scale as f64 / 10.0).collect();
        let trace = evolve(&rates, &p0, &times).unwrap();
        for row in &trace.populations {
            let total: f64 = row.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "total {total}");
            for &p in row {
                prop_assert!(p >= -1e-12, "negative population {p}");
            }
        }
    }

    /// Propagating to t₁ and then onward by t₂ equals propagating to t₁+t₂.
    #[test]
    fn evolution_composes(
        n in 2usize..=6,
        grid in prop::collection::vec(5u32..=100, 15),
        step1 in 1u32..=50,
        step2 in 1u32..=50,
    ) {
        let mut rates = RateMatrix::new(n).unwrap();
        let mut k = 0;
        for i in 1..n {
            for j in 0..i {
                rates.set(i, j, grid[k] as f64 / 100.0).unwrap();
                k += 1;
            }
        }
        let (t1, t2) = (step1 as f64 / 10.0, step2 as f64 / 10.0);
        let mut p0 = vec![0.0; n];
        p0[n - 1] = 1.0;

        let direct = evolve(&rates, &p0, &[t1 + t2]).unwrap();
        let first = evolve(&rates, &p0, &[t1]).unwrap();
        let mid: Vec<f64> = first.populations[0].iter().map(|&p| p.max(0.0)).collect();
        let second = evolve(&rates, &mid, &[t2]).unwrap();
        for l in 0..n {
            prop_assert!(
                (direct.populations[0][l] - second.populations[0][l]).abs() < 1e-9,
                "level {l}: {} vs {}",
                direct.populations[0][l],
                second.populations[0][l]
            );
        }
    }

    /// The two propagation paths agree where both are applicable: perturb a
    /// degenerate cascade so the gap decides the branch, values must match.
    #[test]
    fn propagation_paths_agree(
        gap_exp in 1u32..=6,
        t_scale in 1u32..=40,
    ) {
        // Outflows 0.05 and 0.05 + δ: δ above the gap threshold uses the
        // eigendecomposition, but the matrix exponential is always valid.
        let delta = 10f64.powi(-(gap_exp as i32));
        let rates = RateMatrix::from_rates(
            3,
            &[(1, 0, 0.05), (2, 1, 0.03), (2, 0, 0.02 + delta)],
        )
        .unwrap();
        let t = t_scale as f64;
        let trace = evolve(&rates, &[0.0, 0.0, 1.0], &[t]).unwrap();
        // Closed form for the drained top level.
        let outflow = 0.05 + delta;
        prop_assert!((trace.populations[0][2] - (-outflow * t).exp()).abs() < 1e-9);
        let total: f64 = trace.populations[0].iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}
