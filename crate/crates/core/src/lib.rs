//! Simulation and evaluation lab for surrender risk in endowment portfolios.

pub mod actuarial;
pub mod portfolio;
pub mod rng;
pub mod surrender;
pub mod resampling;
pub mod classifiers;
pub mod evaluation;
pub mod lab;
