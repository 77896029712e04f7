//! Option pricing in the Jacobi stochastic volatility model.
//!
//! Prices are truncated Gram-Charlier series `sum f_n l_n` where the Hermite
//! moments `l_n` come from the polynomial property of the model (a matrix
//! exponential of the generator) and the payoff coefficients `f_n` are known
//! in closed form for calls, puts, digitals and forward-start options.

pub mod cli;
pub mod error;
pub mod generator;
pub mod hermite;
pub mod heston;
pub mod model;
pub mod moments;
pub mod implied_vol;
pub mod payoffs;
pub mod pricing;
pub mod quadrature;
pub mod simulate;

pub use error::{Error, Result};
