use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    NonConvergence { estimate: f64, error_bound: f64 },

    #[error("series did not converge after {terms} terms (xi = {xi})")]
    SeriesNonConvergence { terms: u64, xi: f64 },

    #[error("far-field constraint violated: r = {r} m, models require r > 1 m")]
    FarFieldViolation { r: f64 },

    #[error("no closed form for generic rays with beta = {beta}; supported: 0.5, 1")]
    UnsupportedBeta { beta: f64 },

    #[error("received power underflows f64 at r = {r} m (path loss {path_loss_db:.1} dB)")]
    Underflow { r: f64, path_loss_db: f64 },

    #[error("source ({x}, {y}) lies in a closed cell")]
    SourceInClosedCell { x: f64, y: f64 },

    #[error("source ({x}, {y}) lies outside the lattice")]
    SourceOutsideLattice { x: f64, y: f64 },

    #[error("insufficient samples: {got} (need {needed})")]
    InsufficientSamples { got: usize, needed: usize },

    #[error("relative 95% CI half-width {relative_ci:.3} exceeds {limit:.3}")]
    ImpreciseEstimate { relative_ci: f64, limit: f64 },

    #[error("length mismatch: {measured} measurements vs {predicted} predictions")]
    LengthMismatch { measured: usize, predicted: usize },

    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("neither cell side nor mean obstacle gap given; cannot derive a")]
    MissingSpacing,

    #[error("reference distance {0} m is outside the measured range")]
    ReferenceOutOfRange(f64),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter { name, value, reason }
    }
}
