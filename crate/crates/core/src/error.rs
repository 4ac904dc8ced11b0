use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cost function: {0}")]
    InvalidCost(String),
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("load {load} outside the supported range 1..={max}")]
    LoadOutOfRange { load: usize, max: usize },
    #[error("strategy index {index} out of range for player {player} ({count} strategies)")]
    InvalidStrategy {
        player: usize,
        index: usize,
        count: usize,
    },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("malformed linear program: {0}")]
    MalformedLp(String),
    #[error("lazy constraint generation did not converge after {rounds} rounds")]
    LazyNonConvergence {
        rounds: usize,
        last_objective: f64,
        last_candidate: Vec<f64>,
    },
    #[error("linear program {0}")]
    LpFailed(String),
    #[error("degree {0} outside the supported range 1..=5")]
    DegreeOutOfRange(u32),
    #[error("parameters infeasible: {reason}; smallest admissible c is {min_c:.4}")]
    ParameterInfeasible { reason: String, min_c: f64 },
    #[error("player {0} has zero optimistic cost")]
    DegeneratePlayer(usize),
    #[error("move cap of {cap} exceeded after {moves} moves")]
    MoveCapExceeded { cap: usize, moves: usize },
    #[error("instance too large for exhaustive enumeration: {profiles} profiles (cap {cap})")]
    TooLarge { profiles: f64, cap: f64 },
    #[error("certificate mismatch: {0}")]
    Certificate(String),
    #[error("tail inequality does not hold below load {0}")]
    TailNeverHolds(usize),
    #[error("rounding failed: {0}")]
    Rounding(String),
    #[error("structural error: {0}")]
    Structure(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
