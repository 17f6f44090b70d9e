use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(&'static str),

    #[error("invalid parameter: {0}")]
    Parameter(&'static str),

    #[error("quadrature grid too coarse: need at least {needed_theta} x {needed_phi} nodes, got {theta} x {phi}")]
    GridTooCoarse {
        needed_theta: usize,
        needed_phi: usize,
        theta: usize,
        phi: usize,
    },

    #[error("Laplace inversion did not converge at t = {t} (estimate {estimate:e})")]
    Divergence { t: f64, estimate: f64 },

    #[error("Mittag-Leffler accuracy target missed: achieved {achieved:e}")]
    Accuracy { achieved: f64 },

    #[error("subordinator path exhausted: max value {max_value} does not exceed t = {t}")]
    PathExhausted { max_value: f64, t: f64 },

    #[error("engine mismatch: {0}")]
    EngineMismatch(&'static str),

    #[error("time grid too short: need at least index 2, got {0}")]
    GridTooShort(usize),

    #[error("point lies in the forbidden band (|Δθ| or |θx + θy − π| below {guard})")]
    ForbiddenBand { guard: f64 },

    #[error("unsupported Bernstein function for this operation: {0}")]
    Unsupported(&'static str),

    #[error("input is not a probability density: {0}")]
    NotADensity(&'static str),

    #[error("cannot parse Bernstein spec {0:?}")]
    Parse(alloc::string::String),
}
