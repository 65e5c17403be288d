use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {dim}: Fock cutoff must be at least 2")]
    InvalidDimension { dim: usize },

    #[error("Fock index {n} out of range for cutoff {cutoff}")]
    OutOfRange { n: usize, cutoff: usize },

    #[error("coherent amplitude |alpha|^2 = {norm_sqr} exceeds cutoff/3 = {limit}")]
    TruncationUnsafe { norm_sqr: f64, limit: f64 },

    #[error("phase-space grid reaches |alpha| = {alpha}, beyond the safe limit {limit} for this cutoff")]
    PhaseSpaceRange { alpha: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not a valid density matrix: {0}")]
    InvalidState(String),

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("negative dissipator rate {0}")]
    NegativeRate(f64),

    #[error("master equation has no dissipators; steady state is not unique")]
    NoDissipators,

    #[error("steady state is degenerate (null-space dimension is not 1, pivot ratio {pivot_ratio:e})")]
    DegenerateSteadyState { pivot_ratio: f64 },

    #[error("steady-state residual {0:e} exceeds tolerance")]
    SteadyStateResidual(f64),

    /// Step size underflow. `last_state` is the flattened last accepted state.
    #[error("integration failed at t = {t}: step size {h:e} underflowed")]
    IntegrationFailure {
        t: f64,
        h: f64,
        last_state: Box<[Complex64]>,
    },

    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("classical network blew up at t = {t} (|alpha| > {limit:e})")]
    BlowUp { t: f64, limit: f64 },

    #[error("degenerate normalization: |Z(0)| = {0:e}")]
    DegenerateNormalization(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("group `{0}` is empty for this configuration")]
    EmptyGroup(&'static str),

    #[error("cutoff too small: top-two-level population {population:e} in the {group} group")]
    CutoffTooSmall { group: &'static str, population: f64 },

    #[error("grid has {len} points, at least {min} required")]
    GridTooShort { len: usize, min: usize },

    #[error("grid invalid: {0}")]
    InvalidGrid(String),

    #[error("composite space of dimension {dim} exceeds limit {limit}")]
    SpaceTooLarge { dim: usize, limit: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
