//! Gradient-estimator laboratory for stochastic binary networks.
//!
//! A stochastic binary network (SBN) models binary states as `x = sign(a - z)`
//! with independent injected noise `z`, so that `P(x = +1) = F(a)` for the noise
//! cdf `F`. This crate implements:
//!
//! - the injected-noise models (uniform, logistic, triangular) with the
//!   unit-slope normalisation `2 F'(0) = 1` ([`noise`]);
//! - the SBN computation graph with forward tapes ([`sbn`]);
//! - the straight-through estimator family, local expectations, exact
//!   enumeration oracles and Gumbel-Softmax relaxations ([`estimators`]);
//! - projected gradient, KL mirror descent, variational-Bayes logit decay and
//!   the BayesBiNN replica with its collapsed form ([`optim`]);
//! - estimator-accuracy metrics: expected cosine similarity, expected
//!   improvement, RMSE ([`metrics`]);
//! - the experiment driver, config/CSV/checkpoint I/O and the verification
//!   suite ([`harness`]).

pub mod error;
pub mod estimators;
pub mod harness;
pub mod metrics;
pub mod noise;
pub mod optim;
pub mod sbn;
pub mod stream;

pub use error::Error;
pub use noise::{NoiseKind, NoiseModel};
pub use stream::RandomStream;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
