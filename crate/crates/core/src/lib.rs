//! Simulators, exact solvers and learners for blockchain mining and voting incentives.

pub mod analysis;
pub mod bitcoin;
pub mod casper;
pub mod chain;
pub mod error;
pub mod ethereum;
pub mod mdp;
pub mod multiagent;
pub mod rng;

pub use error::{Error, Result};
pub mod solvers;
pub mod withholding;
