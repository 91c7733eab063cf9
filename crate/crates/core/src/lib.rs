//! Simulation of duplicate-induced leakage in federated cross-validation.
//!
//! Records are drawn from a correlated Gaussian / non-linear logistic model, spread
//! over hospitals, and partly duplicated across hospitals. Cross-validating a
//! gradient-boosted model with random per-hospital folds lets copies of one individual
//! sit in both training and validation folds; stratifying the folds on a covariate
//! shared by all copies keeps them together.
//!
//! Modules, bottom up:
//! - [`datagen`]: covariance construction, record sampling, optimal accuracy
//! - [`federation`]: hospital assignment, duplicate injection, deduplication audit
//! - [`partition`]: random and stratified fold assignment
//! - [`boosting`]: exact-greedy gradient-boosted trees
//! - [`crossval`]: federated k-fold cross-validation
//! - [`experiments`]: the seeded simulation studies behind the CLI

pub mod boosting;
pub mod crossval;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod federation;
pub mod partition;
pub mod rng;

pub use error::{Error, Result};
