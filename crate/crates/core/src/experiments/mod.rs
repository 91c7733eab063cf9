//! The three simulation studies and the optimal-accuracy oracle.
//!
//! Every random quantity is drawn from a stream derived from the master seed:
//! the shared covariance eigenbasis from `sigma[0]`, simulation `j` from `sim[j]`,
//! swept dataset `j` from `ds[j]`, the oracle sample from `oracle[0]`. Work is spread
//! over the rayon pool but results are collected in index order, so output bytes do
//! not depend on the thread count.

mod config;
mod stats;

pub use config::ExperimentConfig;
pub use stats::{mean, ols_slope, pearson, std_dev};

use std::fmt;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::crossval::{run_cv, CvResult};
use crate::datagen::{
    build_covariance, optimal_accuracy_with_error, CovarianceSpec, GenerativeModel, OutcomeParams,
    Record, N_COVARIATES, N_OUTCOME_PARAMS,
};
use crate::error::{Error, Result};
use crate::federation::{fmt_f64, inject_duplicates, FederatedDataset};
use crate::partition::{
    compute_thresholds, random_partition, stratified_partition, unbiased_partition, FoldAssignment,
};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Strategy {
    /// Random folds on the data before duplicates are added.
    Unbiased,
    /// Random per-hospital folds on the duplicated data.
    Random,
    /// Folds from thresholds on covariate `x_c` (1-based) of the duplicated data.
    Stratified(usize),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Unbiased => write!(f, "unbiased"),
            Strategy::Random => write!(f, "random"),
            Strategy::Stratified(c) => write!(f, "stratified_x{c}"),
        }
    }
}

impl Strategy {
    /// Unbiased, random, then stratified on every covariate.
    pub fn all() -> Vec<Strategy> {
        let mut v = vec![Strategy::Unbiased, Strategy::Random];
        v.extend((1..=N_COVARIATES).map(Strategy::Stratified));
        v
    }
}

/// Generative model with the configured eigenvalues, mean and outcome law, and the
/// eigenbasis drawn from the `sigma[0]` stream.
pub fn reference_model(cfg: &ExperimentConfig) -> Result<GenerativeModel> {
    let root = SeedStream::root(cfg.master_seed);
    let spec = CovarianceSpec::random(cfg.eigenvalues, &mut root.child("sigma", 0).rng())?;
    Ok(GenerativeModel {
        covariance: build_covariance(&spec)?,
        mu: cfg.mu,
        params: OutcomeParams::new(cfg.outcome_params)?,
    })
}

/// One simulated federation: the duplicate-free data with its random folds, and the
/// same hospitals after duplicate injection.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub records: Vec<Record>,
    pub original: FederatedDataset,
    pub unbiased_folds: FoldAssignment,
    pub duplicated: FederatedDataset,
    stream: SeedStream,
    k: usize,
}

impl Simulation {
    pub fn generate(
        cfg: &ExperimentConfig,
        model: &GenerativeModel,
        stream: SeedStream,
    ) -> Result<Self> {
        let records = model.generate(cfg.n_gen, &mut stream.child("records", 0).rng());
        let (original, unbiased_folds) = unbiased_partition(
            &records,
            cfg.n_h,
            cfg.k,
            &mut stream.child("unbiased", 0).rng(),
        )?;
        let duplicated = inject_duplicates(
            &original,
            cfg.n_dup,
            &mut stream.child("duplicates", 0).rng(),
        )?;
        Ok(Self {
            records,
            original,
            unbiased_folds,
            duplicated,
            stream,
            k: cfg.k,
        })
    }

    /// The dataset a strategy validates on, with its folds.
    pub fn partition(&self, strategy: Strategy) -> Result<(&FederatedDataset, FoldAssignment)> {
        match strategy {
            Strategy::Unbiased => Ok((&self.original, self.unbiased_folds.clone())),
            Strategy::Random => {
                let folds = random_partition(
                    &self.duplicated,
                    self.k,
                    &mut self.stream.child("random", 0).rng(),
                )?;
                Ok((&self.duplicated, folds))
            }
            Strategy::Stratified(c) => {
                let spec = compute_thresholds(&self.duplicated, c, self.k)?;
                Ok((
                    &self.duplicated,
                    stratified_partition(&self.duplicated, &spec)?,
                ))
            }
        }
    }

    pub fn cross_validate(&self, strategy: Strategy, cfg: &ExperimentConfig) -> Result<CvResult> {
        let (fed, folds) = self.partition(strategy)?;
        run_cv(fed, &folds, &cfg.train_config())
    }
}

/// Monte Carlo optimal accuracy and its standard error for the reference model.
pub fn oracle(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let model = reference_model(cfg)?;
    let mut rng = SeedStream::root(cfg.master_seed).child("oracle", 0).rng();
    optimal_accuracy_with_error(
        &model.covariance,
        &model.mu,
        &model.params,
        cfg.n_mc,
        &mut rng,
    )
}

#[derive(Debug, Clone)]
pub struct LearningCurves {
    pub strategies: Vec<(Strategy, CvResult)>,
    pub optimal_accuracy: f64,
}

/// One simulation validated with the unbiased, random and stratified strategies,
/// keeping the whole per-round accuracy curves.
pub fn exp_learning_curves(cfg: &ExperimentConfig) -> Result<LearningCurves> {
    cfg.validate()?;
    let model = reference_model(cfg)?;
    let sim = Simulation::generate(
        cfg,
        &model,
        SeedStream::root(cfg.master_seed).child("sim", 0),
    )?;
    let strategies = [
        Strategy::Unbiased,
        Strategy::Random,
        Strategy::Stratified(cfg.fig2_covariate),
    ];
    let results: Vec<Result<CvResult>> = strategies
        .par_iter()
        .map(|s| sim.cross_validate(*s, cfg))
        .collect();
    let mut out = Vec::with_capacity(strategies.len());
    for (s, r) in strategies.into_iter().zip(results) {
        out.push((s, r?));
    }
    let (optimal_accuracy, _) = oracle(cfg)?;
    Ok(LearningCurves {
        strategies: out,
        optimal_accuracy,
    })
}

impl LearningCurves {
    pub fn get(&self, strategy: Strategy) -> Option<&CvResult> {
        self.strategies
            .iter()
            .find(|(s, _)| *s == strategy)
            .map(|(_, r)| r)
    }

    /// `iteration,strategy,phase,accuracy` with fold-averaged curves, then one row
    /// `0,optimal,oracle,<accuracy>`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["iteration", "strategy", "phase", "accuracy"])?;
        for (s, cv) in &self.strategies {
            for (phase, curve) in [
                ("train", &cv.mean_train_curve),
                ("valid", &cv.mean_valid_curve),
            ] {
                for (t, acc) in curve.iter().enumerate() {
                    wtr.write_record([
                        (t + 1).to_string(),
                        s.to_string(),
                        phase.into(),
                        fmt_f64(*acc),
                    ])?;
                }
            }
        }
        wtr.write_record([
            "0".to_string(),
            "optimal".into(),
            "oracle".into(),
            fmt_f64(self.optimal_accuracy),
        ])?;
        wtr.flush()?;
        Ok(())
    }

    /// Per-fold curves: `iteration,strategy,fold,phase,accuracy`.
    pub fn write_fold_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["iteration", "strategy", "fold", "phase", "accuracy"])?;
        for (s, cv) in &self.strategies {
            for f in 0..cv.k {
                for (phase, curve) in [
                    ("train", &cv.fold_train_curves[f]),
                    ("valid", &cv.fold_valid_curves[f]),
                ] {
                    for (t, acc) in curve.iter().enumerate() {
                        wtr.write_record([
                            (t + 1).to_string(),
                            s.to_string(),
                            f.to_string(),
                            phase.into(),
                            fmt_f64(*acc),
                        ])?;
                    }
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BiasDistribution {
    /// `(simulation, strategy, final mean validation accuracy)`.
    pub rows: Vec<(usize, Strategy, f64)>,
    pub optimal_accuracy: f64,
}

/// Repeats the simulation `n_sims` times with fixed generating parameters and
/// records the cross-validated accuracy of all twelve strategies.
pub fn exp_bias_distribution(cfg: &ExperimentConfig) -> Result<BiasDistribution> {
    cfg.validate()?;
    let model = reference_model(cfg)?;
    let root = SeedStream::root(cfg.master_seed);
    let strategies = Strategy::all();
    let per_sim: Vec<Result<Vec<(usize, Strategy, f64)>>> = (0..cfg.n_sims)
        .into_par_iter()
        .map(|j| {
            let sim = Simulation::generate(cfg, &model, root.child("sim", j as u64))?;
            strategies
                .par_iter()
                .map(|s| Ok((j, *s, sim.cross_validate(*s, cfg)?.mean_valid_accuracy())))
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(cfg.n_sims * strategies.len());
    for r in per_sim {
        rows.extend(r?);
    }
    let (optimal_accuracy, _) = oracle(cfg)?;
    Ok(BiasDistribution {
        rows,
        optimal_accuracy,
    })
}

impl BiasDistribution {
    pub fn accuracies(&self, strategy: Strategy) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|(_, s, _)| *s == strategy)
            .map(|(_, _, a)| *a)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["sim", "strategy", "accuracy"])?;
        for (j, s, a) in &self.rows {
            wtr.write_record([j.to_string(), s.to_string(), fmt_f64(*a)])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// `strategy,n,mean,std`, then `optimal,1,<accuracy>,0`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["strategy", "n", "mean", "std"])?;
        for s in Strategy::all() {
            let a = self.accuracies(s);
            if a.is_empty() {
                continue;
            }
            wtr.write_record([
                s.to_string(),
                a.len().to_string(),
                fmt_f64(mean(&a)),
                fmt_f64(std_dev(&a)),
            ])?;
        }
        wtr.write_record([
            "optimal".to_string(),
            "1".into(),
            fmt_f64(self.optimal_accuracy),
            fmt_f64(0.0),
        ])?;
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig4Sample {
    pub dataset_id: usize,
    /// 1-based stratifying covariate.
    pub covariate: usize,
    /// Normalized importance of the covariate in the unbiased model, averaged over folds.
    pub importance: f64,
    /// Stratified over unbiased accuracy; `None` when stratifying on this covariate failed.
    pub accuracy_ratio: Option<f64>,
}

#[derive(Debug)]
pub struct ImportanceCorrelation {
    pub samples: Vec<Fig4Sample>,
    pub pearson_r: Result<f64>,
}

/// Draws the generating parameters of sweep dataset `j`: eigenvalues from U[1, 3], a
/// fresh Haar eigenbasis and outcome parameters from U[-5, 5].
pub fn sweep_model(cfg: &ExperimentConfig, stream: SeedStream) -> Result<GenerativeModel> {
    let mut rng = stream.child("eigenvalues", 0).rng();
    let mut eigenvalues = [0.0; N_COVARIATES];
    for v in eigenvalues.iter_mut() {
        *v = rng.random_range(1.0..=3.0);
    }
    let spec = CovarianceSpec::random(eigenvalues, &mut stream.child("orthogonal", 0).rng())?;
    let mut rng = stream.child("params", 0).rng();
    let mut a = cfg.outcome_params;
    let redrawn = if cfg.redraw_a7 {
        N_OUTCOME_PARAMS
    } else {
        N_OUTCOME_PARAMS - 1
    };
    for v in a.iter_mut().take(redrawn) {
        *v = rng.random_range(-5.0..=5.0);
    }
    Ok(GenerativeModel {
        covariance: build_covariance(&spec)?,
        mu: cfg.mu,
        params: OutcomeParams::new(a)?,
    })
}

/// For each of `n_datasets` random generating laws: unbiased cross-validation (which
/// also yields the importances), then one stratified cross-validation per covariate.
pub fn exp_importance_correlation(cfg: &ExperimentConfig) -> Result<ImportanceCorrelation> {
    cfg.validate()?;
    let root = SeedStream::root(cfg.master_seed);
    let per_dataset: Vec<Result<Vec<Fig4Sample>>> = (0..cfg.n_datasets)
        .into_par_iter()
        .map(|j| {
            let stream = root.child("ds", j as u64);
            let model = sweep_model(cfg, stream)?;
            let sim = Simulation::generate(cfg, &model, stream.child("sim", 0))?;
            let unbiased = sim.cross_validate(Strategy::Unbiased, cfg)?;
            let acc_unb = unbiased.mean_valid_accuracy();
            let importance = unbiased.mean_importance();
            (1..=N_COVARIATES)
                .into_par_iter()
                .map(|c| {
                    let ratio = match sim.cross_validate(Strategy::Stratified(c), cfg) {
                        Ok(cv) => Some(cv.mean_valid_accuracy() / acc_unb),
                        Err(
                            e @ (Error::DegenerateStratification { .. } | Error::EmptyFold { .. }),
                        ) => {
                            log::warn!("dataset {j}, covariate x{c}: {e}");
                            None
                        }
                        Err(e) => return Err(e),
                    };
                    Ok(Fig4Sample {
                        dataset_id: j,
                        covariate: c,
                        importance: importance[c - 1],
                        accuracy_ratio: ratio,
                    })
                })
                .collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(cfg.n_datasets * N_COVARIATES);
    for r in per_dataset {
        samples.extend(r?);
    }
    samples.sort_by_key(|s| (s.dataset_id, s.covariate));
    let pearson_r = correlation_of(&samples);
    Ok(ImportanceCorrelation { samples, pearson_r })
}

/// Pearson correlation between importance and accuracy ratio over the successful samples.
pub fn correlation_of(samples: &[Fig4Sample]) -> Result<f64> {
    let (imp, ratio): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter_map(|s| s.accuracy_ratio.map(|r| (s.importance, r)))
        .unzip();
    pearson(&imp, &ratio)
}

impl ImportanceCorrelation {
    /// `dataset,covariate,importance,accuracy_ratio`; a failed stratification leaves
    /// the ratio empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["dataset", "covariate", "importance", "accuracy_ratio"])?;
        for s in &self.samples {
            wtr.write_record([
                s.dataset_id.to_string(),
                s.covariate.to_string(),
                fmt_f64(s.importance),
                s.accuracy_ratio.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Single line: `pearson_r=<value>` or `pearson_r=error:<code>`.
    pub fn summary_line(&self) -> String {
        match &self.pearson_r {
            Ok(r) => format!("pearson_r={}", fmt_f64(*r)),
            Err(e) => format!("pearson_r=error:{}", e.code()),
        }
    }
}
