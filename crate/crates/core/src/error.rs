use thiserror::Error;

/// Errors raised by the analysis routines.
///
/// The variants split into two families: input problems (`Domain`,
/// `Precondition`, `Config`) and numerical degeneracies (`Pole`,
/// `Degenerate`, `UndefinedAtZeroFee`). Front ends map them to different
/// exit codes via [`Error::is_numerical`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pole in particular solution: {0}")]
    Pole(String),

    #[error("degenerate system: {0}")]
    Degenerate(String),

    #[error("boundary coefficients undefined at zero fee (gamma1 = gamma2 = 1)")]
    UndefinedAtZeroFee,
}

impl Error {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Pole(_) | Error::Degenerate(_) | Error::UndefinedAtZeroFee
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
