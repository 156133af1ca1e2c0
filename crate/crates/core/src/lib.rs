//! Mean-variance portfolios from several qualitative rankings of expected returns.
//!
//! Two pipelines turn `K` total orders of assets into a portfolio:
//!
//! * **estimate, then aggregate**: every order is turned into a posterior
//!   return vector with the extended Black-Litterman estimator
//!   ([`estimator`]), and the resulting scenario set is fed to a robust
//!   mean-variance solver ([`solvers`]: max-min, min-max regret, soft
//!   quantile robustness);
//! * **aggregate, then estimate**: the orders are merged into one consensus
//!   order with a social-choice rule ([`aggregation`]: Borda, footrule,
//!   Copeland, best-of-k, MC4, exact Kemeny), and a single posterior feeds a
//!   plain mean-variance solve.
//!
//! [`harness`] benchmarks both pipelines on return panels with synthetic
//! views sampled at a prescribed Kendall-Tau distance ([`ordinal`]), scoring
//! them with [`metrics`].

pub mod aggregation;
mod assignment;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod ordinal;
pub mod seed;
pub mod solvers;
mod truncnorm;

pub use error::{Error, Result};
pub use model::{
    CovarianceMatrix, ModelConfig, PickMatrix, Portfolio, PriorVector, ReturnsPanel, TotalOrder,
};
