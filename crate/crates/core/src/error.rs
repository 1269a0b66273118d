//! Error type shared across the crate.

use std::fmt;

/// Errors raised by model construction, evaluation and I/O.
#[derive(Debug)]
pub enum Error {
    /// A noise-model operation received a NaN or infinite argument.
    NonFiniteInput,
    /// Quantile requested at p <= 0 or p >= 1.
    QuantileBoundary,
    /// Vector/matrix dimensions incompatible at the named site.
    DimensionMismatch { site: &'static str, expected: usize, got: usize },
    /// A forward pass produced a non-finite activation in the given layer.
    NonFiniteActivation { layer: usize },
    /// An estimator that needs exactly one stochastic layer saw several.
    SingleLayerRequired,
    /// Joint enumeration would exceed the configuration budget.
    EnumerationBudget { required_bits: u32, budget_bits: u32 },
    /// Estimator kind not supported by the requested operation.
    UnsupportedEstimator(String),
    /// Invalid hyperparameter or argument.
    InvalidParam(String),
    /// Optimizer saw a non-finite gradient for the named parameter tensor.
    NonFiniteGradient { name: String },
    /// Multinomial reconstruction hit a zero frequency with a positive count.
    DegenerateReconstruction,
    /// Adaptive quadrature failed to reach the requested tolerance.
    QuadratureNonConvergence,
    /// Config file problem, with 1-based line number where known.
    Config { line: Option<usize>, msg: String },
    /// Malformed data file, with 1-based line number.
    Data { line: usize, msg: String },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFiniteInput => write!(f, "non-finite input"),
            Error::QuantileBoundary => write!(f, "quantile undefined at boundary"),
            Error::DimensionMismatch { site, expected, got } => {
                write!(f, "dimension mismatch at {site}: expected {expected}, got {got}")
            }
            Error::NonFiniteActivation { layer } => {
                write!(f, "non-finite activation in layer {layer}")
            }
            Error::SingleLayerRequired => {
                write!(f, "local expectations requires single layer")
            }
            Error::EnumerationBudget { required_bits, budget_bits } => write!(
                f,
                "enumeration budget exceeded: 2^{required_bits} configurations, bound 2^{budget_bits}"
            ),
            Error::UnsupportedEstimator(kind) => write!(f, "unsupported estimator: {kind}"),
            Error::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
            Error::NonFiniteGradient { name } => {
                write!(f, "non-finite gradient for parameter {name}")
            }
            Error::DegenerateReconstruction => write!(f, "degenerate reconstruction"),
            Error::QuadratureNonConvergence => write!(f, "quadrature did not converge"),
            Error::Config { line: Some(line), msg } => write!(f, "config line {line}: {msg}"),
            Error::Config { line: None, msg } => write!(f, "config: {msg}"),
            Error::Data { line, msg } => write!(f, "data line {line}: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
