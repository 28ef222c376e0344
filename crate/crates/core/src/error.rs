use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("singular network: {0}")]
    Singular(String),
    #[error("elimination error: {0}")]
    Elimination(String),
    #[error("matrix structure error: {0}")]
    MatrixStructure(String),
    #[error("evaluation at a pole (s = {0})")]
    PoleEvaluation(Complex64),
    #[error("unsupported operating point: {0}")]
    UnsupportedOperatingPoint(String),
    #[error("inconsistent operating point: {0}")]
    InconsistentOperatingPoint(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("degenerate system: {0}")]
    Degenerate(String),
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),
    #[error("bracket error: {0}")]
    Bracket(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}
