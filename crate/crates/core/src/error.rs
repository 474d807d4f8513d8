use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("human solution time must be positive, got {0}")]
    NonPositiveTau(f64),

    #[error("agent {0} has a non-positive parameter count")]
    NonPositiveParams(String),

    #[error("duplicate agent id {0} in pool")]
    DuplicateAgent(String),

    #[error("unknown agent {0}")]
    UnknownAgent(String),

    #[error("missing jury score from judge {judge} for the bid of {agent}")]
    MissingJudgeScore { judge: String, agent: String },

    #[error("weights do not match the agent pool: {0}")]
    WeightPoolMismatch(String),

    #[error(
        "big-M {big_m} is too small: task {task}, agent {agent} needs at least {required} \
         (100x the unit-weight bound {bound})"
    )]
    BigMTooSmall {
        big_m: f64,
        required: f64,
        bound: f64,
        task: String,
        agent: String,
    },

    #[error("weight optimization is unbounded; bound the weights to obtain a finite optimum")]
    Unbounded,

    #[error("instance too large for brute force: {assignments} assignments (limit {limit})")]
    TooLarge { assignments: f64, limit: f64 },

    #[error("LP solver: {0}")]
    Solver(String),

    #[error("task {0} is already stored in the auction memory")]
    DuplicateTask(String),

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("embedder mismatch: memory was built with `{found}`, expected `{expected}`")]
    EmbedderMismatch { expected: String, found: String },

    #[error("cannot embed empty text")]
    EmptyText,

    #[error("agent {agent} failed while {stage}: {message}")]
    Agent {
        agent: String,
        stage: &'static str,
        message: String,
    },

    #[error("malformed reply from {agent}: {message}")]
    MalformedReply { agent: String, message: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("exact Shapley values support at most {limit} players, got {got}")]
    TooManyPlayers { got: usize, limit: usize },

    #[error("at least {needed} samples required, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("correctness matrix has no entry for task {task}, agent {agent}")]
    MissingEntry { task: String, agent: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} ({location}): {message}")]
    Parse {
        what: &'static str,
        location: String,
        message: String,
    },
}

/// Coarse error classes; the CLI maps each to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Input,
    Io,
    Malformed,
    EmbedderMismatch,
    WeightPoolMismatch,
    Tuning,
    Agent,
    Analysis,
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        use Error::*;
        match self {
            Invalid(_) | NonPositiveTau(_) | NonPositiveParams(_) | DuplicateAgent(_)
            | UnknownAgent(_) | DuplicateTask(_) | DimensionMismatch { .. } | EmptyText => {
                ErrorFamily::Input
            }
            Io { .. } => ErrorFamily::Io,
            Parse { .. } => ErrorFamily::Malformed,
            EmbedderMismatch { .. } => ErrorFamily::EmbedderMismatch,
            WeightPoolMismatch(_) | MissingJudgeScore { .. } => ErrorFamily::WeightPoolMismatch,
            BigMTooSmall { .. } | Unbounded | TooLarge { .. } | Solver(_) => ErrorFamily::Tuning,
            Agent { .. } | MalformedReply { .. } | Transport(_) => ErrorFamily::Agent,
            TooManyPlayers { .. } | TooFewSamples { .. } | MissingEntry { .. } => {
                ErrorFamily::Analysis
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
