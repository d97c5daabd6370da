use thiserror::Error;

/// Failure modes shared by every numerical operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: asymmetry {asymmetry:.3e} exceeds {limit:.3e}")]
    NotHermitian { asymmetry: f64, limit: f64 },

    #[error("matrix is not unitary: max |U*U - I| = {defect:.3e}")]
    NotUnitary { defect: f64 },

    #[error("eigendecomposition did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("window of dimension {have} is too small (need at least {need})")]
    WindowTooSmall { need: usize, have: usize },

    #[error("coefficient sequence grows without bound near k = {k}")]
    UnboundedGrowth { k: i64 },

    #[error("tail products do not decay geometrically: |alpha_{k}| vanishes off the pins")]
    NonDecayingTail { k: i64 },

    #[error("resolvent is numerically singular (pivot ratio {ratio:.3e})")]
    SingularResolvent { ratio: f64 },

    #[error("Verblunsky coefficient leaves the open disk at k = {k}: |alpha| = {modulus}")]
    OutOfDisk { k: i64, modulus: f64 },

    #[error("Fourier-Walsh basis has {count} elements, above the cap {cap}")]
    BasisTooLarge { count: usize, cap: usize },

    #[error("operands live on different index windows")]
    WindowMismatch,

    #[error("exponential series unreliable: norm {norm:.3e} exceeds {limit}")]
    SeriesDivergence { norm: f64, limit: f64 },

    #[error("fit needs at least {need} usable points, got {have}")]
    InsufficientPoints { need: usize, have: usize },

    #[error("plateau must sit strictly inside the support with positive margins")]
    DegenerateMargin,

    #[error("condition estimate {cond:.3e} exceeds 1e14")]
    NearSingular { cond: f64 },

    #[error("regularized resolvent T_eps is not invertible (condition {cond:.3e})")]
    NotInvertible { cond: f64 },

    #[error("optimal index i = {i} touches the window edge")]
    WindowClipsOptimum { i: i64 },

    #[error("truncation floor leaves only {clean} clean points (need {need})")]
    FloorDominates { clean: usize, need: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
