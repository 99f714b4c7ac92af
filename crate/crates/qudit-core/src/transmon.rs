//! Charge-basis transmon: Hamiltonian, spectrum, charge matrix elements,
//! and charge-dispersion curves.
//!
//! The transmon Hamiltonian in the Cooper-pair charge basis `|n⟩`,
//! `n = -N..N`, is
//!
//! ```text
//! H = 4 E_C (n̂ - n_g)² - (E_J/2) Σ_n (|n⟩⟨n+1| + |n+1⟩⟨n|)
//! ```
//!
//! with `E_J`, `E_C` in GHz and the offset charge `n_g` in Cooper pairs.
//! Eigenvectors are real; their sign gauge is fixed by making the
//! largest-magnitude charge amplitude positive, which keeps matrix elements
//! reproducible bit-for-bit between runs.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Default charge-basis cutoff `N` (basis dimension `2N + 1`).
pub const DEFAULT_CHARGE_CUTOFF: usize = 20;

/// Most levels that may be retained from one diagonalization.
pub const MAX_LEVELS: usize = 20;

/// Largest probability weight allowed on the outermost two charge states at
/// each end of the basis before the cutoff is declared inadequate.
const EDGE_WEIGHT_LIMIT: f64 = 1e-8;

/// Physical transmon parameters plus the charge-basis cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmonParams {
    /// Josephson energy, GHz.
    pub e_j: f64,
    /// Charging energy, GHz.
    pub e_c: f64,
    /// Offset charge, Cooper pairs.
    pub n_g: f64,
    /// Charge-basis cutoff `N`; the basis holds `2N + 1` states.
    pub charge_cutoff: usize,
}

impl TransmonParams {
    /// Parameters with the default charge cutoff.
    pub fn new(e_j: f64, e_c: f64, n_g: f64) -> Self {
        Self {
            e_j,
            e_c,
            n_g,
            charge_cutoff: DEFAULT_CHARGE_CUTOFF,
        }
    }

    /// Basis dimension `2N + 1`.
    pub fn dim(&self) -> usize {
        2 * self.charge_cutoff + 1
    }

    /// Rejects unphysical parameters (`E_J < 0`, `E_C ≤ 0`, non-finite
    /// offset charge, or a cutoff of zero).
    pub fn validate(&self) -> Result<()> {
        if !self.e_j.is_finite() || self.e_j < 0.0 {
            return Err(Error::InvalidParam {
                name: "e_j",
                reason: format!("must be finite and non-negative, got {}", self.e_j),
            });
        }
        if !self.e_c.is_finite() || self.e_c <= 0.0 {
            return Err(Error::InvalidParam {
                name: "e_c",
                reason: format!("must be finite and positive, got {}", self.e_c),
            });
        }
        if !self.n_g.is_finite() {
            return Err(Error::InvalidParam {
                name: "n_g",
                reason: "must be finite".into(),
            });
        }
        if self.charge_cutoff < 10 {
            return Err(Error::InvalidParam {
                name: "charge_cutoff",
                reason: format!(
                    "must be at least 10 to cover the eigenstate support, got {}",
                    self.charge_cutoff
                ),
            });
        }
        Ok(())
    }

    /// Dense symmetric Hamiltonian in the charge basis.
    pub fn hamiltonian(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let n = self.charge_cutoff as i64;
        let dim = self.dim();
        let mut h = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let charge = (k as i64 - n) as f64;
            h[(k, k)] = 4.0 * self.e_c * (charge - self.n_g).powi(2);
            if k + 1 < dim {
                h[(k, k + 1)] = -self.e_j / 2.0;
                h[(k + 1, k)] = -self.e_j / 2.0;
            }
        }
        Ok(h)
    }
}

/// Sorted eigenstates of a transmon, with the gauge fixed.
#[derive(Debug, Clone)]
pub struct TransmonSpectrum {
    params: TransmonParams,
    /// Ascending eigenvalues, GHz, ground-referenced (`energies[0] == 0`).
    energies: Vec<f64>,
    /// Columns are eigenvectors over the charge basis, same order as
    /// `energies`.
    eigenvectors: DMatrix<f64>,
}

impl TransmonSpectrum {
    /// Parameters this spectrum was computed from.
    pub fn params(&self) -> &TransmonParams {
        &self.params
    }

    /// Number of retained levels.
    pub fn n_levels(&self) -> usize {
        self.energies.len()
    }

    /// Ground-referenced eigenfrequency of level `i`, GHz.
    pub fn energy(&self, i: usize) -> f64 {
        self.energies[i]
    }

    /// Transition frequency `E_j - E_i`, GHz.
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.energies[j] - self.energies[i]
    }

    /// Anharmonicity `f01 - f_ij`, GHz.
    pub fn anharmonicity(&self, i: usize, j: usize) -> f64 {
        self.transition(0, 1) - self.transition(i, j)
    }

    /// Eigenvector matrix (charge dimension × levels).
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }
}

/// Diagonalizes the transmon and retains the lowest `n_levels` states.
///
/// Fails with [`Error::CutoffInadequate`] when any retained state leaves
/// more than `1e-8` probability on the outermost two charge states at either
/// end of the basis; the error carries the smallest adequate cutoff.
pub fn diagonalize(params: &TransmonParams, n_levels: usize) -> Result<TransmonSpectrum> {
    params.validate()?;
    if n_levels == 0 || n_levels > MAX_LEVELS {
        return Err(Error::InvalidParam {
            name: "n_levels",
            reason: format!("must be in 1..={MAX_LEVELS}, got {n_levels}"),
        });
    }
    if params.dim() < n_levels {
        return Err(Error::InvalidParam {
            name: "charge_cutoff",
            reason: format!(
                "basis dimension {} cannot hold {} levels",
                params.dim(),
                n_levels
            ),
        });
    }

    let (mut energies, eigenvectors) = eig_sorted(params, n_levels);
    let ground = energies[0];
    for e in &mut energies {
        *e -= ground;
    }

    let edge_weight = max_edge_weight(&eigenvectors);
    if edge_weight > EDGE_WEIGHT_LIMIT {
        let suggested = suggest_cutoff(params, n_levels);
        return Err(Error::CutoffInadequate {
            cutoff: params.charge_cutoff,
            levels: n_levels,
            edge_weight,
            suggested,
        });
    }

    Ok(TransmonSpectrum {
        params: *params,
        energies,
        eigenvectors,
    })
}

/// Symmetric eigensolve, ascending order, gauge fixed.
fn eig_sorted(params: &TransmonParams, n_levels: usize) -> (Vec<f64>, DMatrix<f64>) {
    let h = params.hamiltonian().expect("validated by caller");
    let dim = h.nrows();
    let (all_energies, all_vectors) = crate::linalg::eigh_ascending(&h);

    let energies = all_energies[..n_levels].to_vec();
    let mut vectors = DMatrix::zeros(dim, n_levels);
    for col in 0..n_levels {
        let v = all_vectors.column(col);
        // Sign gauge: largest-magnitude amplitude positive; first index wins ties.
        let mut idx = 0;
        let mut best = 0.0f64;
        for (i, &a) in v.iter().enumerate() {
            if a.abs() > best {
                best = a.abs();
                idx = i;
            }
        }
        let sign = if v[idx] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            vectors[(i, col)] = sign * v[i];
        }
    }
    (energies, vectors)
}

/// Largest total weight on the outer two charge states at either basis end.
fn max_edge_weight(vectors: &DMatrix<f64>) -> f64 {
    let dim = vectors.nrows();
    let mut worst = 0.0f64;
    for col in 0..vectors.ncols() {
        let v = vectors.column(col);
        let w = v[0] * v[0] + v[1] * v[1] + v[dim - 2] * v[dim - 2] + v[dim - 1] * v[dim - 1];
        worst = worst.max(w);
    }
    worst
}

/// Smallest cutoff (probing in steps of 5) that passes the edge-weight test.
fn suggest_cutoff(params: &TransmonParams, n_levels: usize) -> usize {
    let mut probe = *params;
    for extra in 1..=12 {
        probe.charge_cutoff = params.charge_cutoff + 5 * extra;
        let (_, vectors) = eig_sorted(&probe, n_levels);
        if max_edge_weight(&vectors) <= EDGE_WEIGHT_LIMIT {
            return probe.charge_cutoff;
        }
    }
    probe.charge_cutoff
}

/// Second-order perturbative estimate `f01 ≈ √(8 E_J E_C) - E_C`, GHz.
pub fn perturbative_f01(e_j: f64, e_c: f64) -> f64 {
    (8.0 * e_j * e_c).sqrt() - e_c
}

/// Inverts the perturbative relations to seed a refinement: `E_C ≈ α` and
/// `E_J ≈ (f01 + E_C)² / (8 E_C)`.
pub fn perturbative_params(f01: f64, alpha: f64) -> (f64, f64) {
    let e_c = alpha;
    let e_j = (f01 + e_c).powi(2) / (8.0 * e_c);
    (e_j, e_c)
}

/// Matrix elements `⟨i|n̂|j⟩` of the Cooper-pair number operator between
/// retained eigenstates. Real in the fixed gauge, and symmetric.
#[derive(Debug, Clone)]
pub struct ChargeMatrixElements {
    m: DMatrix<f64>,
}

impl ChargeMatrixElements {
    /// Number of levels covered.
    pub fn n_levels(&self) -> usize {
        self.m.nrows()
    }

    /// Signed element `⟨i|n̂|j⟩`.
    pub fn element(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    /// `|⟨i|n̂|j⟩|`.
    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)].abs()
    }

    /// Signed element in units of `|⟨0|n̂|1⟩|`.
    pub fn ratio_to_01(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)] / self.m[(0, 1)].abs()
    }

    /// Full matrix over retained levels.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

/// Computes `⟨i|n̂|j⟩` for all retained levels of `spec`.
pub fn charge_matrix_elements(spec: &TransmonSpectrum) -> ChargeMatrixElements {
    let v = spec.eigenvectors();
    let dim = v.nrows();
    let cutoff = (dim - 1) / 2;
    let n_levels = spec.n_levels();
    let mut m = DMatrix::zeros(n_levels, n_levels);
    for i in 0..n_levels {
        for j in i..n_levels {
            let mut acc = 0.0;
            for k in 0..dim {
                let charge = k as f64 - cutoff as f64;
                acc += v[(k, i)] * charge * v[(k, j)];
            }
            m[(i, j)] = acc;
            m[(j, i)] = acc;
        }
    }
    ChargeMatrixElements { m }
}

/// Charge-dispersion curves of the adjacent transitions.
#[derive(Debug, Clone)]
pub struct DispersionCurves {
    /// Offset-charge grid the curves were evaluated on.
    pub n_g: Vec<f64>,
    /// `shifts[i][k] = f_{i,i+1}(n_g[k]) - f_{i,i+1}(0)` in GHz, for each
    /// adjacent transition `i -> i+1`.
    pub shifts: Vec<Vec<f64>>,
    /// Signed full swing `f_{i,i+1}(1/2) - f_{i,i+1}(0)` in GHz per adjacent
    /// transition (the magnitude is the peak-to-peak charge dispersion).
    pub eps_max: Vec<f64>,
}

/// Evaluates the charge dispersion of transitions `0-1 .. (n_levels-2)-(n_levels-1)`
/// on `grid`, which must lie within `[0, 1/2]`; periodicity and the
/// reflection symmetry about `n_g = 0` extend it to all offset charges.
pub fn charge_dispersion(
    params: &TransmonParams,
    n_levels: usize,
    grid: &[f64],
) -> Result<DispersionCurves> {
    if n_levels < 2 {
        return Err(Error::InvalidParam {
            name: "n_levels",
            reason: "dispersion needs at least two levels".into(),
        });
    }
    for &g in grid {
        if !(0.0..=0.5).contains(&g) {
            return Err(Error::InvalidParam {
                name: "n_g",
                reason: format!("grid values must lie in [0, 1/2], got {g}"),
            });
        }
    }

    let transitions_at = |n_g: f64| -> Result<Vec<f64>> {
        let spec = diagonalize(&TransmonParams { n_g, ..*params }, n_levels)?;
        Ok((0..n_levels - 1).map(|i| spec.transition(i, i + 1)).collect())
    };

    let base = transitions_at(0.0)?;
    let sweet = transitions_at(0.5)?;
    let eps_max: Vec<f64> = base.iter().zip(&sweet).map(|(b, s)| s - b).collect();

    let mut shifts = vec![Vec::with_capacity(grid.len()); n_levels - 1];
    for &g in grid {
        let f = transitions_at(g)?;
        for i in 0..n_levels - 1 {
            shifts[i].push(f[i] - base[i]);
        }
    }

    Ok(DispersionCurves {
        n_g: grid.to_vec(),
        shifts,
        eps_max,
    })
}
