pub mod baselines;
pub mod config;
pub mod data;
pub mod diffkit;
pub mod encoder;
pub mod env;
pub mod error;
pub mod grid;
pub mod harness;
pub mod maddpg;
pub mod outage;
pub mod policy;
pub mod powerflow;
pub mod rng;

pub use error::{Error, Result};
