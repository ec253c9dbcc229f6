use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular input: {0}")]
    Singular(String),

    /// The requested mode would need a non-positive resonant frequency.
    #[error("unphysical mode: {0}")]
    UnphysicalMode(String),

    /// f_r/f_open - n lands on a tangent singularity.
    #[error("singular geometry: f_r/f_open - n = {offset}")]
    SingularGeometry { offset: f64 },

    #[error("no {hypothesis} solution fits the measured modes; try the {suggested} hypothesis")]
    KindMismatch {
        hypothesis: &'static str,
        suggested: &'static str,
    },

    #[error("degenerate modes: {0}")]
    DegenerateModes(String),

    #[error("divergent uncertainty: {0}")]
    DivergentUncertainty(String),

    /// Participation vanishes, so the DUT loss cannot be separated.
    #[error("loss tangent undefined: participation is zero")]
    UndefinedExtraction,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("failed to converge: {0}")]
    NonConvergence(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::UnphysicalMode(_)
                | Error::InsufficientData { .. }
                | Error::KindMismatch { .. }
        )
    }
}
