//! k-fold cross-validation over federated folds: per-hospital folds are merged into
//! global folds, each global fold is held out once.

use std::io::Write;

use rayon::prelude::*;

use crate::boosting::{feature_importance, train, Dataset, TrainConfig};
use crate::datagen::{Record, N_COVARIATES};
use crate::error::{invalid, Error, Result};
use crate::federation::{fmt_f64, FederatedDataset};
use crate::partition::FoldAssignment;

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub k: usize,
    pub rounds: usize,
    pub fold_train_curves: Vec<Vec<f64>>,
    pub fold_valid_curves: Vec<Vec<f64>>,
    pub mean_train_curve: Vec<f64>,
    pub mean_valid_curve: Vec<f64>,
    pub fold_importances: Vec<Vec<f64>>,
}

impl CvResult {
    pub fn fold_final_train(&self) -> Vec<f64> {
        self.fold_train_curves
            .iter()
            .map(|c| c[c.len() - 1])
            .collect()
    }

    pub fn fold_final_valid(&self) -> Vec<f64> {
        self.fold_valid_curves
            .iter()
            .map(|c| c[c.len() - 1])
            .collect()
    }

    /// Unweighted mean over folds of the final validation accuracy.
    pub fn mean_valid_accuracy(&self) -> f64 {
        self.mean_valid_curve[self.rounds - 1]
    }

    /// Unweighted mean over folds of the normalized importances.
    pub fn mean_importance(&self) -> Vec<f64> {
        mean_columns(&self.fold_importances)
    }
}

fn mean_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let width = rows.first().map_or(0, Vec::len);
    let mut out = vec![0.0; width];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    let k = rows.len() as f64;
    out.iter_mut().for_each(|v| *v /= k);
    out
}

/// `D_i = ∪_α D_i^(α)`, in hospital order then record order.
pub fn merge_global_folds<'a>(
    fed: &'a FederatedDataset,
    assignment: &FoldAssignment,
) -> Result<Vec<Vec<&'a Record>>> {
    assignment.check_covers(fed)?;
    let mut folds = vec![Vec::new(); assignment.k()];
    for (recs, idx) in fed.hospitals.iter().zip(assignment.per_hospital()) {
        for (r, f) in recs.iter().zip(idx) {
            folds[*f].push(r);
        }
    }
    Ok(folds)
}

pub fn accuracy(labels: &[u8], predictions: &[u8]) -> Result<f64> {
    if labels.is_empty() {
        return Err(invalid("accuracy of an empty sample"));
    }
    if labels.len() != predictions.len() {
        return Err(invalid(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let hits = labels
        .iter()
        .zip(predictions)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Trains on every union of `k - 1` global folds and validates on the remaining one.
/// Folds run in parallel; results are kept in fold order. Validation records that
/// duplicate training records are deliberately left in place.
pub fn run_cv(
    fed: &FederatedDataset,
    assignment: &FoldAssignment,
    config: &TrainConfig,
) -> Result<CvResult> {
    config.validate()?;
    let folds = merge_global_folds(fed, assignment)?;
    if let Some(empty) = folds.iter().position(Vec::is_empty) {
        return Err(Error::EmptyFold { fold: empty });
    }
    let k = folds.len();
    // (train curve, validation curve, importance) per fold
    type FoldOutput = (Vec<f64>, Vec<f64>, Vec<f64>);
    let per_fold: Vec<Result<FoldOutput>> = (0..k)
        .into_par_iter()
        .map(|i| {
            // hospital/record order, so the training set does not depend on fold labels
            let train_set = Dataset::from_records(
                fed.hospitals
                    .iter()
                    .zip(assignment.per_hospital())
                    .flat_map(|(recs, idx)| {
                        recs.iter()
                            .zip(idx)
                            .filter(|(_, f)| **f != i)
                            .map(|(r, _)| r)
                    }),
            );
            let valid_set = Dataset::from_records(folds[i].iter().copied());
            let mut out = train(&train_set, config, &[&train_set, &valid_set])?;
            let valid_curve = out.eval_curves.pop().expect("two eval sets");
            let train_curve = out.eval_curves.pop().expect("two eval sets");
            Ok((train_curve, valid_curve, feature_importance(&out.model)))
        })
        .collect();

    let mut result = CvResult {
        k,
        rounds: config.rounds,
        fold_train_curves: Vec::with_capacity(k),
        fold_valid_curves: Vec::with_capacity(k),
        mean_train_curve: Vec::new(),
        mean_valid_curve: Vec::new(),
        fold_importances: Vec::with_capacity(k),
    };
    for r in per_fold {
        let (t, v, imp) = r?;
        result.fold_train_curves.push(t);
        result.fold_valid_curves.push(v);
        result.fold_importances.push(imp);
    }
    result.mean_train_curve = mean_columns(&result.fold_train_curves);
    result.mean_valid_curve = mean_columns(&result.fold_valid_curves);
    Ok(result)
}

/// Curves as `iteration,fold,phase,accuracy` (fold `mean` for the fold average),
/// then the per-fold summary as `fold,final_train,final_valid,importance_x1..x10`.
pub fn write_cv_csv<W: Write, S: Write>(cv: &CvResult, curves: W, summary: S) -> Result<()> {
    let mut w = csv::Writer::from_writer(curves);
    w.write_record(["iteration", "fold", "phase", "accuracy"])?;
    let labelled = (0..cv.k)
        .map(|f| {
            (
                f.to_string(),
                &cv.fold_train_curves[f],
                &cv.fold_valid_curves[f],
            )
        })
        .chain(std::iter::once((
            "mean".to_string(),
            &cv.mean_train_curve,
            &cv.mean_valid_curve,
        )));
    for (fold, tc, vc) in labelled {
        for (phase, curve) in [("train", tc), ("valid", vc)] {
            for (t, acc) in curve.iter().enumerate() {
                w.write_record([
                    (t + 1).to_string(),
                    fold.clone(),
                    phase.to_string(),
                    fmt_f64(*acc),
                ])?;
            }
        }
    }
    w.flush()?;

    let mut s = csv::Writer::from_writer(summary);
    let mut header = vec![
        "fold".to_string(),
        "final_train".into(),
        "final_valid".into(),
    ];
    header.extend((1..=N_COVARIATES).map(|i| format!("importance_x{i}")));
    s.write_record(&header)?;
    let (ft, fv) = (cv.fold_final_train(), cv.fold_final_valid());
    for f in 0..cv.k {
        let mut row = vec![f.to_string(), fmt_f64(ft[f]), fmt_f64(fv[f])];
        row.extend(cv.fold_importances[f].iter().map(|v| fmt_f64(*v)));
        s.write_record(&row)?;
    }
    s.flush()?;
    Ok(())
}
