//! Gradient-boosted decision trees for binary classification under logistic loss.
//!
//! Trees are grown depth-wise with exact greedy split finding: every midpoint between
//! consecutive distinct values of every feature is a candidate, scored by the usual
//! second-order gain `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`.

mod model;
mod split;
mod tree;

pub use model::{feature_importance, train, GbmModel, TrainOutput};
pub use split::{best_split, split_gain, SplitCandidate};
pub use tree::{build_tree, Tree, TreeNode};

use serde::{Deserialize, Serialize};

use crate::datagen::{sigmoid, Record};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub eta: f64,
    pub reg_lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub base_score: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 200,
            max_depth: 3,
            eta: 0.6,
            reg_lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            base_score: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(invalid("rounds must be >= 1"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid(format!("eta must be in (0, 1], got {}", self.eta)));
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return Err(invalid(format!(
                "base_score must be in (0, 1), got {}",
                self.base_score
            )));
        }
        if !(self.reg_lambda >= 0.0 && self.gamma >= 0.0 && self.min_child_weight >= 0.0) {
            return Err(invalid(
                "reg_lambda, gamma and min_child_weight must be >= 0",
            ));
        }
        Ok(())
    }

    pub fn base_margin(&self) -> f64 {
        (self.base_score / (1.0 - self.base_score)).ln()
    }
}

/// Dense row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    values: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(n_features: usize, values: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if n_features == 0 {
            return Err(invalid("dataset needs at least one feature"));
        }
        if values.len() != n_features * labels.len() {
            return Err(invalid(format!(
                "{} values do not fill {} rows of {n_features} features",
                values.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|y| *y > 1) {
            return Err(invalid("labels must be 0 or 1"));
        }
        Ok(Self {
            n_features,
            values,
            labels,
        })
    }

    pub fn from_records<'a, I>(records: I) -> Self
    where
        I: IntoIterator<Item = &'a Record>,
    {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for r in records {
            values.extend_from_slice(&r.x);
            labels.push(r.y);
        }
        Self {
            n_features: crate::datagen::N_COVARIATES,
            values,
            labels,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.n_features + feature]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Gradient and hessian of the logistic loss with respect to the margin.
#[inline]
pub fn logistic_grad_hess(margin: f64, y: u8) -> (f64, f64) {
    let p = sigmoid(margin);
    (p - f64::from(y), p * (1.0 - p))
}
