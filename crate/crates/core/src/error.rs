use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid step function: {0}")]
    InvalidStepFn(String),

    #[error("sampled function is not monotone nondecreasing near x = {x}")]
    NotMonotone { x: f64 },

    #[error("{x} is not within tolerance of a fixed point")]
    NotAFixedPoint { x: f64 },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("profile is not pure (agent {agent} plays {value})")]
    NotPure { agent: usize, value: f64 },

    #[error("enumeration needs n <= {max}, got n = {n}")]
    TooLarge { n: usize, max: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("thresholds are not constant (agent {agent} has {value}, expected {expected})")]
    NonConstantThresholds {
        agent: usize,
        value: f64,
        expected: f64,
    },

    #[error("initial profile needs P(x*-) <= x*, got P(x*-) = {left_limit} at x* = {x_star}")]
    InitialProfile { x_star: f64, left_limit: f64 },

    #[error("trace does not match the network: {0}")]
    TraceMismatch(String),

    #[error("wave precondition violated at a = {a}: integral = {integral}")]
    WavePrecondition { a: f64, integral: f64 },

    #[error("wave solver did not converge after {iterations} iterations (last change {delta})")]
    WaveNoConvergence { iterations: usize, delta: f64 },

    #[error("invalid wave input: {0}")]
    InvalidWave(String),

    #[error("wave inequality fails at x = {x} (residual {residual})")]
    WaveViolation { x: f64, residual: f64 },

    #[error("no contagion wave: {0}")]
    NoWave(String),

    #[error("invalid cube partition: {0}")]
    InvalidPartition(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
