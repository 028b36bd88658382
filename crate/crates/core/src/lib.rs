//! Pricing multi-player game contingent claims on a binomial market.
//!
//! The crate covers the market lattice and martingale measure, multi-player
//! stopping games with coalition price bounds, super-hedging, equilibrium
//! checks, and the valuation of tranched contracts with put options.

pub mod equilibrium;
pub mod error;
pub mod feasibility;
pub mod gamecore;
pub mod lattice;
pub mod scalar;
pub mod tranches;
pub mod valuation;

pub use error::{PricingError, Result};
pub use gamecore::{Coalition, GameSpec, GameState, JointAction, Strategy, StrategyProfile};
pub use lattice::{MarketLattice, MartingaleMeasure, Node};
pub use scalar::{ratio, Rational, Scalar};
