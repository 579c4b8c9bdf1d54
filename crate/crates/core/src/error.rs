use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("infeasible topology: {0}")]
    InfeasibleTopology(String),
    #[error("generator gave up after {0} attempts")]
    GeneratorExhausted(usize),
    #[error("parameter count {got} does not match edge count {expected}")]
    ParamMismatch { expected: usize, got: usize },
    #[error("parameter {value} on edge {edge} is outside [0, 1]")]
    ParamOutOfRange { edge: usize, value: f64 },
    #[error("node {node} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("time {tau} outside horizon 0..={horizon}")]
    TimeOutOfRange { tau: usize, horizon: usize },
    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),
    #[error("cascades use mixed horizons ({0} and {1})")]
    MixedHorizons(usize, usize),
    #[error("expected {expected} class states, got {got}")]
    ClassCountMismatch { expected: usize, got: usize },
    #[error("state does not match inputs: {0}")]
    StateMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("maximum likelihood requires full observation: {0}")]
    PartialObservation(String),
    #[error("empty average: {0}")]
    EmptyAverage(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
