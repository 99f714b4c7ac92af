//! Dense symmetric eigensolves shared by the spectrum modules.
//!
//! nalgebra's QL-based `SymmetricEigen` can return mispaired
//! eigenvalue/eigenvector columns on matrices with strongly clustered
//! spectra (the transmon⊗cavity Hamiltonian hits this once near-degenerate
//! high transmon levels pick up large photon-assisted couplings). faer's
//! divide-and-conquer solver handles these matrices correctly, so all
//! symmetric eigensolves go through it.

use faer::{Mat, Side};
use nalgebra::DMatrix;

/// Full symmetric eigendecomposition with eigenvalues in ascending order
/// and eigenvector columns in matching order.
///
/// Panics if `h` is not square. Symmetry is the caller's responsibility;
/// only the lower triangle is read.
pub(crate) fn eigh_ascending(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let dim = h.nrows();
    assert_eq!(dim, h.ncols(), "eigh_ascending requires a square matrix");

    let m = Mat::from_fn(dim, dim, |i, j| h[(i, j)]);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .expect("self-adjoint eigensolve failed to converge");
    let s = evd.S();
    let u = evd.U();

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));

    let energies: Vec<f64> = order.iter().map(|&k| s[k]).collect();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (col, &k) in order.iter().enumerate() {
        for row in 0..dim {
            vectors[(row, col)] = u[(row, k)];
        }
    }
    (energies, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_known_two_level_system() {
        // H = [[0, 1], [1, 0]] has eigenvalues ∓1 with (anti)symmetric vectors.
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (e, v) = eigh_ascending(&h);
        assert!((e[0] + 1.0).abs() < 1e-14);
        assert!((e[1] - 1.0).abs() < 1e-14);
        for k in 0..2 {
            let res = (&h * v.column(k) - e[k] * v.column(k)).norm();
            assert!(res < 1e-14);
        }
    }

    #[test]
    fn eigenpairs_stay_paired_on_clustered_spectra() {
        // Two nearly degenerate diagonal blocks bridged by a strong
        // off-diagonal element — the pattern that broke the QL solver.
        let mut h = DMatrix::zeros(6, 6);
        for k in 0..6 {
            h[(k, k)] = (k / 2) as f64 * 10.0 + (k % 2) as f64 * 1e-4;
        }
        h[(4, 5)] = 2.5;
        h[(5, 4)] = 2.5;
        h[(0, 3)] = 0.3;
        h[(3, 0)] = 0.3;
        let (e, v) = eigh_ascending(&h);
        for k in 0..6 {
            let res = (&h * v.column(k) - e[k] * v.column(k)).norm();
            assert!(res < 1e-12, "eigenpair {k} residual {res:e}");
        }
        for k in 1..6 {
            assert!(e[k] >= e[k - 1]);
        }
    }
}
