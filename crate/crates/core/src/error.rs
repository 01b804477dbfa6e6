use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Clone, Debug, Error)]
pub enum Error {
    #[error("resolution {got} below minimum {min} for {what}")]
    Resolution { what: String, got: usize, min: usize },

    #[error("incompatible structure at site {site}: {reason}")]
    Incompatible { site: usize, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("level {level} is within {tol:.3e} of the critical value {critical}")]
    CriticalLevel { level: f64, critical: f64, tol: f64 },

    #[error("shape or tag mismatch: {0}")]
    Mismatch(String),

    #[error("only {have} converged eigenpairs, {need} required; rerun with a larger count")]
    InsufficientPairs { have: usize, need: usize },

    #[error("no gap at position {position}: band edge {band_edge}, next eigenvalue {next}")]
    GapUnresolved { position: usize, band_edge: f64, next: f64 },

    #[error("numerical kernel has dimension {found}, expected {expected}; {hint}")]
    KernelDimension { found: usize, expected: usize, hint: String },

    #[error("test function support {support} reaches closed orbits with periods {periods:?}")]
    PeriodicOrbits { support: f64, periods: Vec<f64> },

    #[error("fit needs at least {need} points, got {have}")]
    TooFewPoints { have: usize, need: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
