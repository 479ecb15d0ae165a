use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },

    /// Gradient of a log-odds quantity evaluated at 0 or 1.
    #[error("unbounded value at domain endpoint (limit {limit})")]
    Unbounded { limit: f64 },

    #[error("likelihood coefficient is infinite for alpha = {alpha}, beta = {beta}; clip the rates first")]
    InfiniteCoefficient { alpha: f64, beta: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for {n} neurons")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("duplicate neuron {index} in stimulation set")]
    DuplicateIndex { index: usize },

    #[error("empty stimulation set")]
    EmptyStimulation,

    #[error("instance too large for exhaustive enumeration: n = {n}, max = {max}")]
    TooLarge { n: usize, max: usize },

    #[error("non-finite value at iteration {iteration}")]
    NumericalFailure { iteration: usize },

    #[error("output neuron {output}: {source}")]
    Output {
        output: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Attribute this error to one output neuron.
    pub fn at_output(self, output: usize) -> Self {
        Error::Output {
            output,
            source: alloc::boxed::Box::new(self),
        }
    }

    /// True if this error (or the per-output error it wraps) is a numerical
    /// failure rather than a configuration problem.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure { .. } => true,
            Error::Output { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
