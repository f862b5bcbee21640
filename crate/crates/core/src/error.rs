use thiserror::Error;

/// Failure modes shared by every layer of the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("division by a jet with zero value")]
    DegenerateValue,
    #[error("positivity violated: value {value} is not > 0")]
    PositivityViolation { value: f64 },
    #[error("variable index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("metric is singular at chart point {point:?} (det = {det:e})")]
    SingularMetric { point: Vec<f64>, det: f64 },
    #[error("degenerate ratio: B = {b:e} is not above the floor {floor:e}")]
    DegenerateRatio { b: f64, floor: f64 },
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("family is not positive: offset {offset} leaves minimum {min} below margin {margin}")]
    NonPositiveFamily { offset: f64, min: f64, margin: f64 },
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid search configuration: {0}")]
    InvalidSearch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
