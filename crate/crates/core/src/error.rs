use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The requested exhaustive computation exceeds its configured limit.
    #[error("size limit exceeded: {what} needs more than {limit}")]
    Size { what: String, limit: u64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("infeasible solution: actor {} has {ones} active actions", .actor + 1)]
    InfeasibleSolution { actor: usize, ones: usize },

    /// A suboptimal action is indistinguishable from the optimal one, so no
    /// finite number of pulls satisfies the coverage requirement.
    #[error("unbounded exploration requirement for actor {}, action {}: zero divergence", .actor + 1, .action + 1)]
    UnboundedRequirement { actor: usize, action: usize },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
