//! Scenario simulation and Monte Carlo benchmarking for the coexisting
//! point/extended target filters: ground-truth sampling from the birth and
//! dynamic models, measurement generation, reproducible seeded runs of the
//! filter variants, GOSPA scoring, and result persistence.

pub mod config;
pub mod io;
pub mod measurements;
pub mod montecarlo;
pub mod rng;
pub mod scenario;
