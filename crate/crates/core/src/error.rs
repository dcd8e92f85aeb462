use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

/// Failures raised by the coarse time-stepper and the analyses built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
        value: f64,
    },

    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("particle {index} left the finite range after stepping")]
    NonFinite { index: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate ensemble: {0}")]
    Degenerate(&'static str),

    #[error("reconstructed ICDF row {row} decreases by {drop:.3e} (tolerance {tolerance:.3e})")]
    NonMonotone {
        row: usize,
        drop: f64,
        tolerance: f64,
    },

    #[error("template incompatible: marginal quantile {quantile} cannot be mapped onto e = {e}")]
    TemplateIncompatible { quantile: f64, e: f64 },

    #[error("uninformative probe: operator estimates are within 3 standard errors of zero at every point")]
    UninformativeProbe,

    #[error("flat residual at p = {p}: derivative {derivative:.3e}")]
    FlatResidual { p: f64, derivative: f64 },

    #[error("Newton iterate p = {p} left the admissible range (0, {p_max}]")]
    Diverged { p: f64, p_max: f64 },

    #[error(
        "operator ratio {ratio} is not positive; invariance hypothesis fails or noise dominates"
    )]
    NonPositiveRatio { ratio: f64 },

    #[error("exponent ill-conditioned: denominator {denominator:.3e}")]
    IllConditioned { denominator: f64 },
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: "must be finite and positive",
            value,
        })
    }
}
