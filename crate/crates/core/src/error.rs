use thiserror::Error;

/// Errors raised by the model and optimizer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside its domain: {reason}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("photon-number truncation overflow: {photons} photons exceed the table bound {bound}")]
    TruncationOverflow { photons: u32, bound: u32 },

    #[error("no signal: total gain is zero, error rate undefined")]
    NoSignal,

    #[error("invalid intensity set: {0}")]
    IntensitySet(&'static str),

    #[error("invalid scan range: {0}")]
    Range(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<f64> {
    if value.is_nan() || value < lo || value > hi {
        return Err(Error::ParameterDomain {
            name,
            value,
            reason: if value.is_nan() { "not a number" } else { "out of range" },
        });
    }
    Ok(value)
}

pub(crate) fn check_nonneg(name: &'static str, value: f64) -> Result<f64> {
    if value.is_nan() || value < 0.0 || value.is_infinite() {
        return Err(Error::ParameterDomain {
            name,
            value,
            reason: "must be finite and non-negative",
        });
    }
    Ok(value)
}
