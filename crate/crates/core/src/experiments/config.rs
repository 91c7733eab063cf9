use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boosting::TrainConfig;
use crate::datagen::{
    Covariates, DEFAULT_EIGENVALUES, DEFAULT_OUTCOME_PARAMS, N_COVARIATES, N_OUTCOME_PARAMS,
};
use crate::error::{Error, Result};

/// Full parameterization of an experiment run. Loaded from a flat TOML document;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_gen: usize,
    pub n_dup: usize,
    pub n_h: usize,
    pub k: usize,
    pub mu: Covariates,
    pub eigenvalues: [f64; N_COVARIATES],
    pub outcome_params: [f64; N_OUTCOME_PARAMS],
    pub rounds: usize,
    pub max_depth: usize,
    pub eta: f64,
    pub reg_lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub base_score: f64,
    pub master_seed: u64,
    pub scale: f64,
    pub n_sims: usize,
    pub n_datasets: usize,
    pub n_mc: usize,
    /// Covariate stratified on in the learning-curve experiment.
    pub fig2_covariate: usize,
    /// Whether the parameter sweep also redraws `a7` (otherwise it keeps `outcome_params[7]`).
    pub redraw_a7: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            n_gen: 10_000,
            n_dup: 2_000,
            n_h: 5,
            k: 5,
            mu: [0.0; N_COVARIATES],
            eigenvalues: DEFAULT_EIGENVALUES,
            outcome_params: DEFAULT_OUTCOME_PARAMS,
            rounds: train.rounds,
            max_depth: train.max_depth,
            eta: train.eta,
            reg_lambda: train.reg_lambda,
            gamma: train.gamma,
            min_child_weight: train.min_child_weight,
            base_score: train.base_score,
            master_seed: 2020,
            scale: 1.0,
            n_sims: 30,
            n_datasets: 100,
            n_mc: 100_000,
            fig2_covariate: 1,
            redraw_a7: true,
        }
    }
}

fn scale_count(v: usize, scale: f64, min: usize) -> usize {
    ((v as f64 * scale).round() as usize).max(min)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rounds: self.rounds,
            max_depth: self.max_depth,
            eta: self.eta,
            reg_lambda: self.reg_lambda,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
            base_score: self.base_score,
        }
    }

    /// Hex SHA-256 of the canonical JSON form; identical configs hash identically.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return err(format!("scale must be in (0, 1], got {}", self.scale));
        }
        if self.n_gen == 0 || self.n_h == 0 {
            return err("n_gen and n_h must be >= 1".into());
        }
        if self.k < 2 {
            return err(format!("k must be >= 2, got {}", self.k));
        }
        if self.n_dup > self.n_gen * (self.n_h - 1) {
            return err(format!(
                "n_dup = {} exceeds the {} free (individual, hospital) slots",
                self.n_dup,
                self.n_gen * (self.n_h - 1)
            ));
        }
        if self
            .eigenvalues
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return err("eigenvalues must be positive and finite".into());
        }
        if self
            .mu
            .iter()
            .chain(&self.outcome_params)
            .any(|v| !v.is_finite())
        {
            return err("mu and outcome_params must be finite".into());
        }
        if self.n_sims == 0 || self.n_mc == 0 || self.n_datasets < 2 {
            return err("n_sims and n_mc must be >= 1, n_datasets >= 2".into());
        }
        if !(1..=N_COVARIATES).contains(&self.fig2_covariate) {
            return err(format!("fig2_covariate must be in 1..={N_COVARIATES}"));
        }
        self.train_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `scale` and returns an equivalent config with `scale = 1`.
    ///
    /// Counts (`n_gen`, `n_dup`, `n_sims`, `n_datasets`, `n_mc`) shrink linearly;
    /// boosting rounds shrink by `max(scale, 0.5)` so short runs still train long enough
    /// for leakage to show.
    pub fn scaled(&self) -> Result<Self> {
        self.validate()?;
        let s = self.scale;
        let mut out = self.clone();
        out.n_gen = scale_count(self.n_gen, s, 1);
        out.n_dup = ((self.n_dup as f64 * s).round() as usize).min(out.n_gen * (self.n_h - 1));
        out.n_sims = scale_count(self.n_sims, s, 1);
        out.n_datasets = scale_count(self.n_datasets, s, 2);
        out.n_mc = scale_count(self.n_mc, s, 1);
        out.rounds = scale_count(self.rounds, s.max(0.5), 1);
        out.scale = 1.0;
        out.validate()?;
        Ok(out)
    }
}
