//! Error taxonomy shared by every module in the crate.
//!
//! Variants separate caller mistakes (bad domains, inconsistent configuration,
//! degenerate inputs, malformed files) from runtime failures of the numerics
//! (non-convergent quadrature or fits). Binaries built on this crate map the
//! former to exit code 2 and the latter to exit code 3.

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside its mathematical domain (negative waist,
    /// probability outside [0, 1], non-normalized projector, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration pieces are individually valid but mutually inconsistent
    /// (pump components outside the detection window, grating wider than the
    /// Fourier guard band, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input that is syntactically valid but carries no usable information
    /// (all-zero subspace, all-zero Cholesky factor, zero counts, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A numerical procedure failed to converge or produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A statistical estimation stage failed (reconstruction did not converge,
    /// too many bootstrap failures, ...).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Malformed structured input (scenario or counts file).
    #[error("format error: {0}")]
    Format(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error is the caller's fault (exit code 2 for binaries),
    /// false for runtime numerical/estimation failures (exit code 3).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Config(_)
                | Error::DegenerateInput(_)
                | Error::Format(_)
                | Error::Io(_)
        )
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_errors_are_classified() {
        assert!(Error::Domain("x".into()).is_input_error());
        assert!(Error::Config("x".into()).is_input_error());
        assert!(Error::DegenerateInput("x".into()).is_input_error());
        assert!(Error::Format("x".into()).is_input_error());
        assert!(!Error::Numerical("x".into()).is_input_error());
        assert!(!Error::Estimation("x".into()).is_input_error());
    }

    #[test]
    fn messages_carry_context() {
        let e = Error::Domain("waist must be positive".into());
        assert_eq!(e.to_string(), "domain error: waist must be positive");
    }
}
