use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state {x} lies outside the state space ({lower}, {upper})")]
    OutsideStateSpace { x: f64, lower: f64, upper: f64 },

    #[error("coefficient evaluation at x = {x} is not finite or violates sigma > 0")]
    BadCoefficient { x: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("measure carrier meets the stopping set near x = {x}")]
    CarrierOverlap { x: f64 },

    #[error("atom at {x} is not a node of the level grid")]
    AtomNotOnLevels { x: f64 },

    #[error("grid is missing the special point {x}")]
    GridMissingPoint { x: f64 },

    #[error("policy iteration did not converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },

    #[error("no sign change of the bracketing function on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("payoff functions violate R <= G at x = {x}")]
    RewardOrdering { x: f64 },

    #[error("non-finite reward encountered at x = {x}")]
    NonFiniteReward { x: f64 },

    #[error("concave envelope method requires a driftless undiscounted model")]
    NotDriftless,

    #[error("probe support meets the explosion set")]
    ProbeMeetsExplosion,

    #[error("example construction check failed: {0}")]
    Construction(String),

    #[error("iteration limit reached after {0} updates without fixed point or cycle")]
    IterationLimit(usize),

    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, Error>;
