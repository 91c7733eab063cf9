use serde::Serialize;

use super::split::SortedColumns;
use super::tree::{grow, Tree, TreeNode};
use super::{logistic_grad_hess, Dataset, TrainConfig};
use crate::error::{invalid, Result};

/// Additive ensemble: `margin(x) = base_margin + Σ eta·tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GbmModel {
    pub config: TrainConfig,
    pub base_margin: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl GbmModel {
    pub fn empty(config: TrainConfig, n_features: usize) -> Self {
        Self {
            base_margin: config.base_margin(),
            config,
            n_features,
            trees: Vec::new(),
        }
    }

    /// Margin using only the first `n_trees` trees. Contributions are added one tree
    /// at a time, which is exactly how training updates its margins.
    pub fn predict_margin_upto(&self, x: &[f64], n_trees: usize) -> f64 {
        self.trees[..n_trees.min(self.trees.len())]
            .iter()
            .fold(self.base_margin, |m, t| m + self.config.eta * t.predict(x))
    }

    pub fn predict_margin(&self, x: &[f64]) -> f64 {
        self.predict_margin_upto(x, self.trees.len())
    }

    /// 1 iff the margin is strictly positive.
    pub fn predict_label(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_margin(x) > 0.0)
    }

    /// Debug dump, one JSON document per model. Not a stable format.
    pub fn dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: GbmModel,
    /// `eval_curves[e][t]` is the accuracy on eval set `e` after round `t + 1`.
    pub eval_curves: Vec<Vec<f64>>,
}

fn accuracy_of_margins(margins: &[f64], labels: &[u8]) -> f64 {
    let hits = margins
        .iter()
        .zip(labels)
        .filter(|(m, y)| u8::from(**m > 0.0) == **y)
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Boosts `config.rounds` depth-limited trees and tracks accuracy on each eval set
/// after every round. An eval set that is the training set itself (same reference)
/// reuses the training margins.
pub fn train(train: &Dataset, config: &TrainConfig, eval_sets: &[&Dataset]) -> Result<TrainOutput> {
    config.validate()?;
    let n = train.n_rows();
    if n == 0 {
        return Err(invalid("training set is empty"));
    }
    if (0..n).any(|r| train.row(r).iter().any(|v| v.is_nan())) {
        return Err(invalid("training set contains NaN"));
    }
    for (i, e) in eval_sets.iter().enumerate() {
        if e.n_features() != train.n_features() {
            return Err(invalid(format!(
                "eval set {i} has {} features, expected {}",
                e.n_features(),
                train.n_features()
            )));
        }
    }
    let positives = train.labels().iter().filter(|y| **y == 1).count();
    if positives == 0 || positives == n {
        log::warn!("training set holds a single class ({positives} positives of {n})");
    }

    let cols = SortedColumns::new(train, 0..n);
    let mut model = GbmModel::empty(*config, train.n_features());
    let mut margins = vec![model.base_margin; n];
    let mut gh = vec![(0.0, 0.0); n];

    let is_train: Vec<bool> = eval_sets.iter().map(|e| std::ptr::eq(*e, train)).collect();
    let mut eval_margins: Vec<Vec<f64>> = eval_sets
        .iter()
        .zip(&is_train)
        .map(|(e, t)| {
            if *t {
                Vec::new()
            } else {
                vec![model.base_margin; e.n_rows()]
            }
        })
        .collect();
    let mut eval_curves: Vec<Vec<f64>> = vec![Vec::with_capacity(config.rounds); eval_sets.len()];

    for _ in 0..config.rounds {
        for ((slot, m), y) in gh.iter_mut().zip(&margins).zip(train.labels()) {
            *slot = logistic_grad_hess(*m, *y);
        }
        let (tree, leaf_of_row) = grow(&cols, train, &gh, config);
        let weights: Vec<f64> = tree
            .nodes()
            .iter()
            .map(|node| match node {
                TreeNode::Leaf { weight } => *weight,
                TreeNode::Split { .. } => 0.0,
            })
            .collect();
        for (m, leaf) in margins.iter_mut().zip(&leaf_of_row) {
            *m += config.eta * weights[*leaf as usize];
        }
        for (e, set) in eval_sets.iter().enumerate() {
            if is_train[e] {
                eval_curves[e].push(accuracy_of_margins(&margins, train.labels()));
                continue;
            }
            for (r, m) in eval_margins[e].iter_mut().enumerate() {
                *m += config.eta * tree.predict(set.row(r));
            }
            eval_curves[e].push(accuracy_of_margins(&eval_margins[e], set.labels()));
        }
        model.trees.push(tree);
    }
    Ok(TrainOutput { model, eval_curves })
}

/// Per-feature sum of split gains over all trees, normalized to sum to one. All zeros
/// when the model has no split.
pub fn feature_importance(model: &GbmModel) -> Vec<f64> {
    let mut imp = vec![0.0; model.n_features];
    for t in &model.trees {
        for (f, gain) in t.splits() {
            imp[f] += gain;
        }
    }
    let total: f64 = imp.iter().sum();
    if total > 0.0 {
        for v in imp.iter_mut() {
            *v /= total;
        }
    }
    imp
}
