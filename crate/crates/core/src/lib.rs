//! Expectile-based VaR and ES forecasting with realized measures.

pub mod backtest;
pub mod cli;
pub mod data;
pub mod error;
pub mod forecast;
pub mod mcmc;
pub mod measures;
pub mod models;
pub mod ml;
pub mod objective;
pub mod optim;
pub mod report;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
