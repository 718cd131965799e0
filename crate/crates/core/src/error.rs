use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("capability exceeded: {0}")]
    Capability(String),
    #[error("resource cap exceeded: need {required} entries, cap is {cap}")]
    Resource { required: u128, cap: u128 },
    #[error("construction failed: achieved eps {achieved:e} below floor {floor:e}")]
    Construction { achieved: f64, floor: f64 },
    #[error("degenerate conditioning: mass {mass:e} inside truncation window")]
    DegenerateConditioning { mass: f64 },
    #[error("degenerate polynomial: zero variance under both hypotheses")]
    DegeneratePolynomial,
    #[error("numerical conditioning: {0}")]
    Conditioning(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub(crate) fn contract(msg: impl Into<String>) -> LabError {
    LabError::Contract(msg.into())
}
