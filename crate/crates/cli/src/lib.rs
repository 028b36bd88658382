//! Command-line front end: configuration files, commands and reports.

pub mod commands;
pub mod config;
pub mod report;

use gameclaims::PricingError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

impl CliError {
    /// Process exit status for the error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Pricing(PricingError::BudgetExceeded { .. }) => 3,
            CliError::Pricing(PricingError::ZeroSumViolation { .. }) => 4,
            CliError::Pricing(_) => 1,
        }
    }
}

/// Exit status of a feasibility check that found no consistent prices, when
/// requested.
pub const EXIT_EMPTY: i32 = 5;
