//! Bayesian double machine learning for the partially linear model, with
//! frequentist and single-equation Bayesian competitors, prior diagnostics,
//! a replication harness and asymptotic experiments.

pub mod app;
pub mod asymptotics;
pub mod bayes_lm;
pub mod competitors;
pub mod config;
pub mod dataset_io;
pub mod dgp;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod prior_audit;
pub mod ridge;
pub mod rng;
pub mod stats;
pub mod sur;

pub use error::{Error, Result};
