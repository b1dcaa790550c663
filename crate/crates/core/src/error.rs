use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} must be finite (got {value})")]
    NonFinite { name: &'static str, value: f64 },

    #[error("spin must be non-negative (got 2j = {twice})")]
    NegativeSpin { twice: i32 },

    #[error("projection 2m = {twice_m} is not valid for spin 2j = {twice_j}")]
    InvalidProjection { twice_j: i32, twice_m: i32 },

    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("cutoff {cutoff} leaves truncation tail {tail:e} above the allowed {allowed:e}")]
    InsufficientCutoff {
        cutoff: usize,
        tail: f64,
        allowed: f64,
    },

    #[error("subspace (n_a = {n_a}, n_b = {n_b}) has negligible weight {weight:e}")]
    EmptySubspace { n_a: usize, n_b: usize, weight: f64 },

    #[error("posterior vanished on the whole grid")]
    ZeroPosterior,

    #[error("closed forms disagree: {first} vs {second}")]
    InconsistentForms { first: f64, second: f64 },

    #[error("cannot parse spin label {0:?}")]
    ParseHalfInt(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { name, value })
    }
}
