//! Transmon ⊗ cavity product system: dressed eigenstructure, ladder
//! classification, dispersive shifts, and device-parameter refinement.
//!
//! The Hamiltonian kept here is the full multilevel Rabi form
//!
//! ```text
//! H = Σ_i E_i |i⟩⟨i| ⊗ 1  +  1 ⊗ f_c a†a  +  Σ_ij g_ij |i⟩⟨j| ⊗ (a + a†)
//! ```
//!
//! with no rotating-wave approximation and couplings scaled off the charge
//! matrix elements, `g_ij = g01 · ⟨i|n̂|j⟩ / |⟨0|n̂|1⟩|`. Dressed states are
//! assigned to transmon ladders by their resonator-traced projections
//! `P_i(k) = sqrt(Σ_l |⟨i,l|k⟩|²)`, which makes `Σ_i P_i²` exactly one.

use nalgebra::DMatrix;

use crate::transmon::{ChargeMatrixElements, TransmonParams, TransmonSpectrum};
use crate::{transmon, Error, Result};

/// Largest product dimension the dense eigensolver will accept.
pub const MAX_PRODUCT_DIM: usize = 2500;

/// Ratio of top to second projection below which a dressed state is mixed.
const MIXING_FACTOR: f64 = 2.0;

/// Dispersive ratios above this are tagged as beyond the dispersive scale.
const DISPERSIVE_RATIO_CAP: f64 = 1000.0;

/// Couplings smaller than this fraction of `g01` give no meaningful ratio.
const COUPLING_FLOOR: f64 = 1e-6;

/// Readout-cavity parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    /// Bare cavity frequency, GHz.
    pub f_c: f64,
    /// Coupling of the 0-1 transmon transition to the cavity, GHz.
    pub g01: f64,
    /// Cavity linewidth, GHz.
    pub kappa: f64,
    /// Number of resonator Fock states kept in the product basis.
    pub n_resonator: usize,
}

impl CavityParams {
    /// Rejects unphysical cavity parameters.
    pub fn validate(&self) -> Result<()> {
        if !self.f_c.is_finite() || self.f_c <= 0.0 {
            return Err(Error::InvalidParam {
                name: "f_c",
                reason: format!("must be finite and positive, got {}", self.f_c),
            });
        }
        if !self.g01.is_finite() || self.g01 < 0.0 {
            return Err(Error::InvalidParam {
                name: "g01",
                reason: format!("must be finite and non-negative, got {}", self.g01),
            });
        }
        if !self.kappa.is_finite() || self.kappa <= 0.0 {
            return Err(Error::InvalidParam {
                name: "kappa",
                reason: format!("must be finite and positive, got {}", self.kappa),
            });
        }
        if self.n_resonator < 10 {
            return Err(Error::InvalidParam {
                name: "n_resonator",
                reason: format!(
                    "need at least 10 Fock states for a converged ladder, got {}",
                    self.n_resonator
                ),
            });
        }
        Ok(())
    }
}

/// Builds the dense product-space Hamiltonian.
///
/// Product index convention: state `(i, l)` (transmon level `i`, photon
/// number `l`) sits at row `i * n_resonator + l`. Transmon energies enter
/// ground-referenced, the resonator as `f_c · l`.
pub fn coupled_hamiltonian(
    spec: &TransmonSpectrum,
    elements: &ChargeMatrixElements,
    cavity: &CavityParams,
) -> Result<DMatrix<f64>> {
    cavity.validate()?;
    let nt = spec.n_levels();
    let nr = cavity.n_resonator;
    let dim = nt * nr;
    if dim > MAX_PRODUCT_DIM {
        return Err(Error::DimensionTooLarge {
            dim,
            max: MAX_PRODUCT_DIM,
        });
    }

    let g = coupling_matrix(elements, cavity.g01);
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..nt {
        let e_i = spec.energy(i) - spec.energy(0);
        for l in 0..nr {
            let row = i * nr + l;
            h[(row, row)] = e_i + cavity.f_c * l as f64;
            // (a + a†) couples photon numbers l and l+1 with weight √(l+1).
            if l + 1 < nr {
                let x = ((l + 1) as f64).sqrt();
                for j in 0..nt {
                    let col = j * nr + l + 1;
                    h[(row, col)] += g[(i, j)] * x;
                    h[(col, row)] += g[(i, j)] * x;
                }
            }
        }
    }
    Ok(h)
}

/// Coupling matrix `g_ij = g01 · ⟨i|n̂|j⟩ / |⟨0|n̂|1⟩|` over retained levels.
fn coupling_matrix(elements: &ChargeMatrixElements, g01: f64) -> DMatrix<f64> {
    let n = elements.n_levels();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = g01 * elements.ratio_to_01(i, j);
        }
    }
    g
}

/// One entry of the dispersive-ratio table `Δ_ij / g_ij`.
#[derive(Debug, Clone, Copy)]
pub struct DispersiveRatio {
    /// Lower transmon level of the pair.
    pub i: usize,
    /// Upper transmon level of the pair.
    pub j: usize,
    /// `|f_ij(bare) - f_c| / |g_ij|`.
    pub ratio: f64,
    /// True when the ratio exceeds the dispersive scale and should be left
    /// out of quantitative comparisons.
    pub beyond_scale: bool,
}

/// Dressed eigenstructure of the coupled system, classified into ladders.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    n_transmon: usize,
    n_resonator: usize,
    f_c: f64,
    /// Dressed energies, ground-referenced, ascending.
    energies: Vec<f64>,
    /// Ladder label (transmon level) per dressed state.
    labels: Vec<usize>,
    /// Resonator-traced projections, `projections[k][i] = P_i(k)`.
    projections: Vec<Vec<f64>>,
    /// Per-state mixing flag: top projection < 2 × second.
    state_mixed: Vec<bool>,
    /// Dressed-state indices per ladder, ascending in energy.
    ladders: Vec<Vec<usize>>,
    /// Ground-referenced bare transmon energies.
    bare: Vec<f64>,
    /// Coupling matrix `g_ij`, GHz.
    couplings: DMatrix<f64>,
}

/// Diagonalizes the product system and classifies every dressed state.
///
/// Classification takes the largest traced projection; exact ties resolve to
/// the lower transmon index and are necessarily flagged mixed (equal top
/// projections are within any mixing factor).
pub fn diagonalize_coupled(
    spec: &TransmonSpectrum,
    elements: &ChargeMatrixElements,
    cavity: &CavityParams,
) -> Result<CoupledSystem> {
    let h = coupled_hamiltonian(spec, elements, cavity)?;
    let nt = spec.n_levels();
    let nr = cavity.n_resonator;
    let dim = nt * nr;

    let (raw_energies, vectors) = crate::linalg::eigh_ascending(&h);

    let ground = raw_energies[0];
    let mut energies = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    let mut projections = Vec::with_capacity(dim);
    let mut state_mixed = Vec::with_capacity(dim);
    let mut ladders = vec![Vec::new(); nt];

    for state in 0..dim {
        energies.push(raw_energies[state] - ground);
        let v = vectors.column(state);
        let mut proj = vec![0.0f64; nt];
        for i in 0..nt {
            let mut w = 0.0;
            for l in 0..nr {
                let c = v[i * nr + l];
                w += c * c;
            }
            proj[i] = w.sqrt();
        }
        // Strictly-greater scan: lowest index wins exact ties.
        let mut label = 0;
        for i in 1..nt {
            if proj[i] > proj[label] {
                label = i;
            }
        }
        let top = proj[label];
        let second = proj
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label)
            .map(|(_, &p)| p)
            .fold(0.0f64, f64::max);
        labels.push(label);
        state_mixed.push(top < MIXING_FACTOR * second);
        projections.push(proj);
        ladders[label].push(state);
    }

    let bare: Vec<f64> = (0..nt).map(|i| spec.energy(i) - spec.energy(0)).collect();

    Ok(CoupledSystem {
        n_transmon: nt,
        n_resonator: nr,
        f_c: cavity.f_c,
        energies,
        labels,
        projections,
        state_mixed,
        ladders,
        bare,
        couplings: coupling_matrix(elements, cavity.g01),
    })
}

impl CoupledSystem {
    /// Transmon levels in the product basis.
    pub fn n_transmon(&self) -> usize {
        self.n_transmon
    }

    /// Resonator Fock states in the product basis.
    pub fn n_resonator(&self) -> usize {
        self.n_resonator
    }

    /// Number of dressed states (the full product dimension).
    pub fn n_states(&self) -> usize {
        self.energies.len()
    }

    /// Ground-referenced dressed energy of state `k`, GHz.
    pub fn energy(&self, k: usize) -> f64 {
        self.energies[k]
    }

    /// Ladder label of dressed state `k`.
    pub fn label(&self, k: usize) -> usize {
        self.labels[k]
    }

    /// Traced projection of dressed state `k` onto transmon level `i`.
    pub fn projection(&self, k: usize, i: usize) -> f64 {
        self.projections[k][i]
    }

    /// Whether dressed state `k` is mixed (top projection < 2 × second).
    pub fn is_state_mixed(&self, k: usize) -> bool {
        self.state_mixed[k]
    }

    /// Dressed states assigned to ladder `i`, ascending in energy.
    pub fn rungs(&self, i: usize) -> &[usize] {
        &self.ladders[i]
    }

    /// Energy of rung `k` of ladder `i`, if that many states were assigned.
    pub fn rung_energy(&self, i: usize, k: usize) -> Option<f64> {
        self.ladders[i].get(k).map(|&s| self.energies[s])
    }

    /// Whether any state assigned to ladder `i` is mixed.
    pub fn ladder_mixed(&self, i: usize) -> bool {
        self.ladders[i].iter().any(|&s| self.state_mixed[s])
    }

    /// Coupling matrix `g_ij`, GHz.
    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.couplings
    }

    /// Bare (uncoupled) transition frequency `f_ij`, GHz.
    pub fn bare_transition(&self, i: usize, j: usize) -> f64 {
        self.bare[j] - self.bare[i]
    }

    /// Dressed transition between the zero-photon rungs of ladders `i` and `j`.
    pub fn dressed_transition(&self, i: usize, j: usize) -> Option<f64> {
        Some(self.rung_energy(j, 0)? - self.rung_energy(i, 0)?)
    }

    /// Dispersive shift of ladder `i`: `E(i,1) - E(i,0) - f_c`.
    ///
    /// Mixed ladders have no dispersive description; asking for one is an
    /// error rather than a number.
    pub fn chi(&self, i: usize) -> Result<f64> {
        if self.ladder_mixed(i) {
            return Err(Error::NonDispersive { ladder: i });
        }
        match (self.rung_energy(i, 0), self.rung_energy(i, 1)) {
            (Some(e0), Some(e1)) => Ok(e1 - e0 - self.f_c),
            _ => Err(Error::NonDispersive { ladder: i }),
        }
    }

    /// Dispersive shifts for all ladders; `None` marks mixed or short ladders.
    pub fn chis(&self) -> Vec<Option<f64>> {
        (0..self.n_transmon).map(|i| self.chi(i).ok()).collect()
    }

    /// Consecutive rung spacings of ladder `i`, GHz.
    pub fn ladder_spacings(&self, i: usize) -> Vec<f64> {
        self.ladders[i]
            .windows(2)
            .map(|w| self.energies[w[1]] - self.energies[w[0]])
            .collect()
    }

    /// `Δ_ij/g_ij` for one level pair, if the coupling is non-negligible.
    /// Symmetric in `(i, j)` because the detuning uses the upward transition.
    pub fn dispersive_ratio(&self, i: usize, j: usize) -> Option<f64> {
        let (lo, hi) = (i.min(j), i.max(j));
        let g = self.couplings[(lo, hi)].abs();
        if g <= COUPLING_FLOOR * self.couplings[(0, 1)].abs() {
            return None;
        }
        Some((self.bare_transition(lo, hi) - self.f_c).abs() / g)
    }

    /// Detuning-to-coupling table over all level pairs with real coupling.
    pub fn dispersive_ratios(&self) -> Vec<DispersiveRatio> {
        let mut out = Vec::new();
        for i in 0..self.n_transmon {
            for j in i + 1..self.n_transmon {
                if let Some(ratio) = self.dispersive_ratio(i, j) {
                    out.push(DispersiveRatio {
                        i,
                        j,
                        ratio,
                        beyond_scale: ratio > DISPERSIVE_RATIO_CAP,
                    });
                }
            }
        }
        out
    }
}

/// Dressed observables a refinement run must reproduce.
#[derive(Debug, Clone, Copy)]
pub struct RefineTargets {
    /// Dressed 0-1 transition, GHz.
    pub f01: f64,
    /// Dressed 1-2 transition, GHz.
    pub f12: f64,
    /// Ground-ladder dispersive shift, GHz.
    pub chi0: f64,
}

/// Outcome of [`refine_device`].
#[derive(Debug, Clone)]
pub struct RefinedDevice {
    /// Transmon parameters after refinement.
    pub transmon: TransmonParams,
    /// Cavity parameters after refinement (only `g01` changes).
    pub cavity: CavityParams,
    /// Levenberg–Marquardt iterations used.
    pub iterations: usize,
    /// Final residual norm over the three targets, GHz.
    pub residual_norm: f64,
}

/// Adjusts `(E_J, E_C, g01)` so the dressed `f01`, `f12`, and `χ0` hit the
/// targets, holding `n_g`, `f_c`, and the basis sizes fixed.
///
/// The three parameters are strongly correlated through the dressed spectrum,
/// so a single joint descent from a coarse start can stall. Refinement
/// therefore proceeds in stages: `(E_J, E_C)` against the two transitions,
/// then `g01` against `χ0`, then one joint polish of all three.
pub fn refine_device(
    t0: &TransmonParams,
    c0: &CavityParams,
    n_transmon: usize,
    targets: &RefineTargets,
) -> Result<RefinedDevice> {
    t0.validate()?;
    c0.validate()?;
    let evaluate = |x: &[f64]| -> Result<[f64; 3]> {
        let tp = TransmonParams {
            e_j: x[0],
            e_c: x[1],
            ..*t0
        };
        let cp = CavityParams { g01: x[2], ..*c0 };
        let spec = transmon::diagonalize(&tp, n_transmon)?;
        let elements = transmon::charge_matrix_elements(&spec);
        let sys = diagonalize_coupled(&spec, &elements, &cp)?;
        let f01 = sys
            .dressed_transition(0, 1)
            .ok_or(Error::NonDispersive { ladder: 0 })?;
        let f12 = sys
            .dressed_transition(1, 2)
            .ok_or(Error::NonDispersive { ladder: 1 })?;
        let chi0 = sys.chi(0)?;
        Ok([f01, f12, chi0])
    };

    // Both transitions respond almost identically to (E_J, E_C), which makes
    // residuals in (f01, f12) form a badly conditioned pair. The equivalent
    // (f01, anharmonicity) pair separates the sensitivities; the solution set
    // is unchanged because the recombination is invertible and the targets
    // are exactly reachable.
    let alpha_t = targets.f01 - targets.f12;

    // The residual closures must be infallible for the fitter; failures show
    // up as huge residuals so the damping backs the step off.
    let opts = crate::fit::FitOptions::default();
    let mut iterations = 0;

    // Pre-fit the bare transmon to the targets. The bare spectrum is cheap,
    // has no ladder structure to trip over, and lands within the few-MHz
    // dressed corrections of the final answer.
    let bare = crate::fit::least_squares(
        |x| {
            let tp = TransmonParams {
                e_j: x[0],
                e_c: x[1],
                ..*t0
            };
            match transmon::diagonalize(&tp, 3) {
                Ok(spec) => {
                    let f01 = spec.transition(0, 1);
                    let f12 = spec.transition(1, 2);
                    vec![f01 - targets.f01, (f01 - f12) - alpha_t]
                }
                Err(_) => vec![1e6; 2],
            }
        },
        &[t0.e_j, t0.e_c],
        &opts,
    )?;
    iterations += bare.iterations;

    let (mut e_j1, mut e_c1, mut g1) = (bare.x[0], bare.x[1], c0.g01);

    // Alternate the two separable stages: the cross-sensitivities (f01, f12
    // on g01; χ0 on E_J, E_C) are weak, so alternation contracts quickly.
    for _ in 0..3 {
        // Transmon energies against transition and anharmonicity at fixed
        // coupling.
        let transitions = crate::fit::least_squares(
            |x| match evaluate(&[x[0], x[1], g1]) {
                Ok([f01, f12, _]) => vec![f01 - targets.f01, (f01 - f12) - alpha_t],
                Err(_) => vec![1e6; 2],
            },
            &[e_j1, e_c1],
            &opts,
        )?;
        iterations += transitions.iterations;
        (e_j1, e_c1) = (transitions.x[0], transitions.x[1]);

        // Coupling against the dispersive shift (monotonic in g²).
        let coupling = crate::fit::least_squares(
            |x| match evaluate(&[e_j1, e_c1, x[0] * x[0]]) {
                Ok([_, _, chi0]) => vec![chi0 - targets.chi0],
                Err(_) => vec![1e6],
            },
            &[g1.abs().sqrt()],
            &opts,
        )?;
        iterations += coupling.iterations;
        g1 = coupling.x[0] * coupling.x[0];
    }

    // Joint polish from inside the correct basin.
    let fit = crate::fit::least_squares(
        |x| match evaluate(x) {
            Ok([f01, f12, chi0]) => vec![
                f01 - targets.f01,
                (f01 - f12) - alpha_t,
                chi0 - targets.chi0,
            ],
            Err(_) => vec![1e6; 3],
        },
        &[e_j1, e_c1, g1],
        &opts,
    )?;
    iterations += fit.iterations;

    // Report the residual in plain target coordinates.
    let residual_norm = match evaluate(&fit.x) {
        Ok([f01, f12, chi0]) => ((f01 - targets.f01).powi(2)
            + (f12 - targets.f12).powi(2)
            + (chi0 - targets.chi0).powi(2))
        .sqrt(),
        Err(_) => f64::INFINITY,
    };

    Ok(RefinedDevice {
        transmon: TransmonParams {
            e_j: fit.x[0],
            e_c: fit.x[1],
            ..*t0
        },
        cavity: CavityParams {
            g01: fit.x[2],
            ..*c0
        },
        iterations,
        residual_norm,
    })
}
