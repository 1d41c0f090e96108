//! Learning sequences of parameterized manipulation primitives for peg
//! insertion, with a quasi-static contact simulator, a hybrid
//! discrete/continuous PPO agent and three comparison baselines.

pub mod baselines;
pub mod cma;
pub mod env;
pub mod error;
pub mod harness;
pub mod se3;
pub mod policy;
pub mod ppo;
pub mod primitives;
pub mod sim;

pub use error::{Error, Result};
