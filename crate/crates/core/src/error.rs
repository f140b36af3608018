use thiserror::Error;

/// Structural problems found while validating a network description.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("I - P is singular; the network is not open")]
    NonOpenNetwork,
    #[error("station {station}: priority ranks are not a strict total order over its classes")]
    NonStrictPriority { station: usize },
    #[error("class {class}: {detail}")]
    BadRates { class: usize, detail: String },
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid network: {}", join(.0))]
    InvalidNetwork(Vec<Violation>),
    #[error("I - P is singular; the network is not open")]
    NonOpenNetwork,
    #[error("class {class} has a non-positive rate at r = {r}")]
    NegativeRate { class: usize, r: f64 },
    #[error("heavy-traffic family: {0}")]
    BadFamily(String),
    #[error("transform root not found: {0}")]
    NoConvergence(String),
    #[error("the high-priority block A_H is singular")]
    AhSingular,
    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("service means violate the two-station normalization: {0}")]
    BadNormalization(String),
    #[error("conditioning event for class {class} never occurred")]
    ConditioningEventEmpty { class: usize },
    #[error("no transform point with these parameters was registered")]
    UnknownPoint,
    #[error("no events of type {0}")]
    NoEvents(String),
    #[error("truncated state space has {states} states")]
    StateSpaceTooLarge { states: f64 },
    #[error("stationary solver failed: {0}")]
    SolverFailure(String),
    #[error("reflection LCP failed: {0}")]
    LcpFailure(String),
    #[error("face {face} was never pushed")]
    NoBoundaryMass { face: usize },
    #[error("analysis failed: {0}")]
    AnalysisFailed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
