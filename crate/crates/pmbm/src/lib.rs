//! Multi-object Bayesian filtering for scenes with coexisting point and
//! extended targets.
//!
//! The library propagates a Poisson multi-Bernoulli mixture (PMBM) posterior:
//! a Poisson point process for targets that have never been detected, plus a
//! multi-Bernoulli mixture over data-association hypotheses for detected
//! potential targets. Point targets carry a Gaussian kinematic density,
//! extended targets a gamma Gaussian inverse-Wishart (GGIW) density, and each
//! Bernoulli keeps a class probability between the two.
//!
//! Module map:
//! - [`hybrid`]: the hybrid single-target state space and the PMBM container.
//! - [`models`]: Kalman and GGIW predict/update with marginal likelihoods,
//!   and moment-matched mixture reduction.
//! - [`assoc`]: gating, DBSCAN partitioning and Murty's ranked assignment.
//! - [`filter`]: the PMBM prediction/update recursion and pruning.
//! - [`pmb`]: track-oriented projection of a PMBM onto a PMB.
//! - [`estimator`]: target-set extraction from a posterior.
//! - [`gospa`]: GOSPA scoring with a Gaussian-Wasserstein base metric.
//! - [`brute`]: slow reference implementations used by the test suites.

pub mod assoc;
pub mod brute;
pub mod error;
pub mod estimator;
pub mod filter;
pub mod gospa;
pub mod hybrid;
pub mod models;
pub mod numeric;
pub mod pmb;

pub use error::PmbmError;
