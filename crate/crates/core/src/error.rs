use thiserror::Error;

/// Errors raised by the runtime, the engines and the oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A distribution parameter or input lies outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A runtime contract was violated (branching a dead particle, NaN observe, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A model re-executed over a recorded prefix diverged from its recording.
    #[error("model is not deterministic under replay: {0}")]
    Nondeterministic(String),

    /// Particles disagreed on the number of observes passed.
    #[error("barrier misalignment at observe {observe}: {detail}")]
    ObserveMismatch { observe: usize, detail: String },

    /// Every particle carries zero likelihood.
    #[error("degenerate sweep: all particles have zero likelihood at observe {observe}")]
    DegenerateSweep { observe: usize },

    /// The model program reported an internal fault.
    #[error("model fault: {0}")]
    ModelFault(String),

    #[error("unknown predict name `{0}`")]
    UnknownPredict(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// An exact oracle refused its input (e.g. enumeration too large).
    #[error("oracle refused: {0}")]
    Oracle(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
