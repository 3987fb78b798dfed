use std::path::PathBuf;

/// Errors reported by graph construction, problem generation, and the run
/// harness. Validation-shaped variants map to CLI exit code 2, the rest to 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no connected graph found for m={m}, p={p} after {attempts} attempts; raise p or max_retries")]
    NotConnected { m: usize, p: f64, attempts: usize },

    #[error("edge set does not connect all {m} agents")]
    Disconnected { m: usize },

    #[error("spectral gap {gap:.3e} is below 1e-12; mixing matrix is effectively disconnected")]
    DegenerateGap { gap: f64 },

    #[error("sigma2 must lie in [0, 1), got {sigma2}")]
    InvalidGap { sigma2: f64 },

    #[error("sample count {samples} is not divisible by agent count {agents}")]
    IndivisibleData { samples: usize, agents: usize },

    #[error("normal equations are singular and inconsistent (residual {residual:.3e}); reference solve failed")]
    SingularSystem { residual: f64 },

    #[error("problem does not declare a closed-form proximal step")]
    NoCheapProx,

    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGap { .. }
                | Error::IndivisibleData { .. }
                | Error::InvalidConfig { .. }
                | Error::Format { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
