use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The adiabatic bound-state picture breaks down: the Stark-shifted
    /// orbital energy is no longer negative.
    #[error("adiabatic breakdown: Stark-shifted orbital energy {energy_au:.6} au is not bound")]
    AdiabaticBreakdown { energy_au: f64 },

    /// A harmonic frequency outside the classical range of a branch.
    #[error("frequency {omega_au:.6} au outside classical range [{min_au:.6}, {max_au:.6}] au")]
    OutOfRange {
        omega_au: f64,
        min_au: f64,
        max_au: f64,
    },

    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Invalid configuration, naming the offending key.
    #[error("invalid configuration `{key}`: {constraint}")]
    Config { key: String, constraint: String },

    /// A field map is in the wrong plane for the requested operation.
    #[error("wrong plane: expected {expected}, found {found}")]
    WrongPlane {
        expected: &'static str,
        found: &'static str,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            constraint: constraint.into(),
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
