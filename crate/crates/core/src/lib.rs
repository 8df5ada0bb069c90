pub mod analytics;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod market_data;
pub mod mechanism;
pub mod milp;
pub mod optimizer;
pub mod scenario;

pub use error::{Error, Result};
