use thiserror::Error;

use crate::stats::Direction;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("probability vector needs at least 2 outcomes, got {0}")]
    TooFewOutcomes(usize),

    #[error("weight {value} at index {index} is not finite")]
    NonFiniteWeight { index: usize, value: f64 },

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("weights sum to {sum}, outside tolerance {tolerance} of 1")]
    SumOutOfTolerance { sum: f64, tolerance: f64 },

    #[error("outcome index {index} out of range for {k} outcomes")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("generator '{name}' has undefined gradient at the given point")]
    GradientUndefined { name: String },

    #[error("generator '{name}' failed validation: {detail}")]
    GeneratorInvalid { name: String, detail: String },

    #[error("paired sample needs at least {min} observations, got {got}")]
    SampleTooSmall { min: usize, got: usize },

    #[error("paired sample contains a non-finite loss at index {index}")]
    NonFiniteSample { index: usize },

    #[error("zero variance of paired differences (all differences identical)")]
    ZeroVariance { direction: Direction },

    #[error("all paired differences are zero")]
    AllDifferencesZero,

    #[error("exact Wilcoxon enumeration supports 1 <= n <= {max}, got {got}")]
    ExactEnumerationRange { got: usize, max: usize },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("invalid argument for {what}: {detail}")]
    InvalidArgument { what: &'static str, detail: String },

    #[error("parse error line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("zero probability on outcome {index} rejected by policy")]
    ZeroProbabilityRejected { index: usize },

    #[error(
        "infinite loss for model '{model}' on record '{record}'; \
         switch rules or use a clamping zero policy"
    )]
    InfiniteLoss { model: String, record: String },

    #[error("need at least 2 models, got {0}")]
    NeedTwoModels(usize),

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("could not sample an interior state after {attempts} attempts")]
    BoundaryResampleExhausted { attempts: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
