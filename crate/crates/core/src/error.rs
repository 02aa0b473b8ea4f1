use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Bad input shape, unknown name, missing field.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model is not strongly concave: {0}")]
    NotStronglyConcave(String),
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),
    #[error("numerical blow-up at step {step}: {detail}")]
    NumericalBlowup { step: u64, detail: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("flow integration failed at t = {t}: {detail} (try a smaller dt)")]
    IntegrationFailure { t: f64, detail: String },
    #[error("input is within {gap:e} of the optimum; ratio undefined")]
    NearOptimal { gap: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("input too large: {0}")]
    Size(String),
    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    /// True for errors caused by the caller's description of the problem rather
    /// than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::NotStronglyConcave(_)
                | Error::DegenerateModel(_)
                | Error::Precondition(_)
                | Error::Unsupported(_)
                | Error::Size(_)
                | Error::Domain(_)
        )
    }
}

pub(crate) fn check_dim(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what}: expected dimension {expected}, got {got}"
        )))
    }
}
