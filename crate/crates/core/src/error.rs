use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("window cannot be resolved on this grid: {0}")]
    WindowResolution(String),

    #[error("lattice index {0:?} outside the window lattice (kmax = {1})")]
    OutOfLattice(Vec<i64>, i64),

    #[error("frequency outside the representable band: {0}")]
    OutOfBand(String),

    #[error("invalid scales: {0}")]
    InvalidScales(String),

    #[error("invalid time grid: {0}")]
    InvalidTimes(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("regime violated: {0}")]
    Regime(String),

    #[error("blow-up guard triggered at t = {t}: sup norm {sup:.3e} exceeds limit {limit:.3e}")]
    BlowUp { t: f64, sup: f64, limit: f64 },

    #[error("Picard iteration diverged; contraction factors {factors:?}")]
    Diverged { factors: Vec<f64> },

    #[error("certificate violated at iterate {iterate}: {inequality}")]
    Certificate { iterate: usize, inequality: String },

    #[error("cross-validation disagreement {distance:.3e} exceeds tolerance {tolerance:.3e}")]
    Disagreement { distance: f64, tolerance: f64 },

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
