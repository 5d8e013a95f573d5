//! Error type shared by all test constructions.

/// Errors produced by kernel construction, estimators and calibration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data contained non-finite values or had an unusable shape.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numeric parameter was outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A block layout did not match the data dimension.
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    /// Not enough observations for the requested estimator.
    #[error("sample too small: need at least {needed} observations, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    /// All pairwise distances were zero (or another degeneracy of the sample).
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// The reference model was unusable for the requested operation.
    #[error("invalid reference: {0}")]
    InvalidReference(String),

    /// The requested calibration cannot be carried out with the given inputs.
    #[error("calibration unavailable: {0}")]
    CalibrationUnavailable(String),

    /// A perturbation specification violated its own constraints.
    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(String),

    /// A statistic failed at one point of a scaling grid.
    #[error("statistic failed at nu = {nu}: {source}")]
    AtNu {
        nu: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach the scaling parameter at which an inner computation failed.
    pub fn at_nu(self, nu: f64) -> Error {
        Error::AtNu {
            nu,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
