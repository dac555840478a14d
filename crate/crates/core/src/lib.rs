//! Digital-twin cellular network simulator with a parallel multi-agent PPO
//! trainer for user association.

pub mod agent;
pub mod env;
pub mod error;
pub mod eval;
pub mod geo;
pub mod geom;
pub mod radio;
pub mod rng;
pub mod scenario;
pub mod trainer;

pub use error::{Error, Result};
