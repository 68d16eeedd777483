use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("shape mismatch: expected length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("numerical divergence at step {step}")]
    Divergence { step: usize },

    #[error(
        "constraint drift |C(t,t) - 1| = {drift:.3e} at t = {t:.4}; retry with a smaller step (h <= {suggested_h})"
    )]
    Instability { t: f64, drift: f64, suggested_h: f64 },

    #[error(
        "negative radicand {radicand:.6e} in the growth exponent at delta2 = {delta2}, delta3 = {delta3}, beta = {beta}"
    )]
    NegativeRadicand {
        delta2: f64,
        delta3: f64,
        beta: f64,
        radicand: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("closed form and root finder disagree at delta2 = {delta2}: {closed} vs {bracketed}")]
    Inconsistent {
        delta2: f64,
        closed: f64,
        bracketed: f64,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::Shape { expected, actual })
        }
    }
}
