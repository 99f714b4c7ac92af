//! Error type shared by all analysis modules.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the physics and fitting routines.
///
/// Validation failures (bad parameters, malformed inputs) are reported
/// eagerly by constructors; numerical failures (non-convergence,
/// ill-conditioning) come out of the solvers themselves.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A physical or numerical parameter is outside its allowed range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    /// The charge-basis cutoff leaves too much weight on the outermost
    /// charge states for the requested number of levels.
    #[error(
        "charge cutoff {cutoff} is inadequate for {levels} levels \
         (edge weight {edge_weight:.2e}); use a cutoff of at least {suggested}"
    )]
    CutoffInadequate {
        cutoff: usize,
        levels: usize,
        edge_weight: f64,
        suggested: usize,
    },

    /// The transmon⊗cavity product dimension exceeds the supported maximum.
    #[error("product dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    /// A dispersive shift was requested for a ladder flagged as mixed.
    #[error("ladder {ladder} is non-dispersive (mixed with a neighbor); no shift defined")]
    NonDispersive { ladder: usize },

    /// An inversion matrix is too ill-conditioned to invert reliably.
    #[error("matrix is ill-conditioned (condition number {condition:.3e} > {limit:.1e})")]
    IllConditioned { condition: f64, limit: f64 },

    /// A least-squares fit failed to converge.
    #[error("fit did not converge within {max_iter} iterations (residual {residual:.3e})")]
    NoConvergence { max_iter: usize, residual: f64 },

    /// More than two strong spectral peaks: the two-tone Ramsey model does
    /// not apply and the fit is refused rather than forced.
    #[error("{count} strong spectral peaks found; refusing multi-frequency fit")]
    MultiFrequency { count: usize },

    /// No spectral peaks cleared the prominence threshold; there is nothing
    /// to fit.
    #[error("no spectral peaks found above the prominence threshold")]
    NoPeaks,

    /// Input data are structurally unusable (wrong length, non-uniform grid,
    /// missing columns and the like).
    #[error("invalid data: {0}")]
    InvalidData(String),
}
