use thiserror::Error;

/// Errors raised by the pricing library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PricingError {
    #[error("arbitrage in the market model: accrual {accrual} must lie strictly between down factor {down} and up factor {up}")]
    ArbitrageViolation {
        up: String,
        down: String,
        accrual: String,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: expected {expected} node values, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("strategy has no action for player {player} at {state}")]
    IncompleteStrategy { player: usize, state: String },
    #[error("enumeration budget exceeded: {required} candidates, budget {budget}")]
    BudgetExceeded { required: u128, budget: u128 },
    #[error("replication is singular at {0}: child prices coincide")]
    SingularReplication(String),
    #[error("hyperplane with every coordinate fixed does not meet the target sum")]
    DegenerateHyperplane,
    #[error("empty simplex: lower bounds sum to {bounds_sum}, target is {target}")]
    EmptySimplex { bounds_sum: String, target: String },
    #[error("zero-sum condition fails at decision {decision} (date {date}), node {node}: sum of put payoffs {put_sum} exceeds sum of continuation values {continuation_sum}")]
    ZeroSumViolation {
        decision: usize,
        date: usize,
        node: usize,
        put_sum: String,
        continuation_sum: String,
    },
    #[error("no optimal equilibrium found among {searched} profiles")]
    NoEquilibriumFound { searched: usize },
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("invalid contract: {0}")]
    InvalidContract(String),
}

pub type Result<T> = std::result::Result<T, PricingError>;
