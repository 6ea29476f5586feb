use crate::C64;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("near-resonant resolvent symbol: min |symbol| = {min:e}, max |symbol| = {max:e}")]
    NearResonance { min: f64, max: f64 },

    #[error("dense size {n} exceeds cap {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("dense eigendecomposition failed")]
    EigenFailure,

    #[error("degenerate spectral gap {gap:e} between states {n_occ} and {}", n_occ + 1)]
    DegenerateGap { gap: f64, n_occ: usize },

    #[error("singular Gram matrix (rank-deficient block)")]
    SingularGram,

    #[error("shift {mu} is not below lambda_(N+1) = {lambda_next}: Hessian is indefinite")]
    IndefiniteHessian { mu: f64, lambda_next: f64 },

    #[error("contour geometry: {0}")]
    ContourGeometry(String),

    #[error("GMRES breakdown at pole {pole:?}: {reason}")]
    GmresBreakdown { pole: Option<usize>, reason: String },

    #[error("sparse factorization failed for z = {z}, sparsification residual {residual:e}")]
    Factorization { z: C64, residual: f64 },

    #[error("rank deficiency in sketched projector: |R_NN| / |R_11| = {ratio:e}; try a larger oversampling")]
    RankDeficient { ratio: f64 },

    #[error("zero block")]
    ZeroBlock,

    #[error("config: {0}")]
    Config(String),

    #[error("report: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
