use serde::Serialize;

use super::split::{scan_level, NodeStats, SortedColumns, INACTIVE};
use super::{Dataset, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// Binary regression tree; node 0 is the root, nodes are numbered breadth first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] < threshold { left } else { right },
                TreeNode::Leaf { .. } => return i,
            }
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { weight } => weight,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// Sum of split gains, i.e. the reduction of the second-order objective.
    pub fn total_gain(&self) -> f64 {
        self.splits().map(|(_, gain)| gain).sum()
    }

    /// `(feature, gain)` of every internal node.
    pub fn splits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            TreeNode::Split { feature, gain, .. } => Some((feature, gain)),
            TreeNode::Leaf { .. } => None,
        })
    }
}

pub(crate) fn grow(
    cols: &SortedColumns,
    data: &Dataset,
    gh: &[(f64, f64)],
    cfg: &TrainConfig,
) -> (Tree, Vec<u32>) {
    let n = data.n_rows();
    let mut node_of = vec![0u32; n];
    let mut nodes = vec![TreeNode::Leaf { weight: 0.0 }];
    let mut stats = vec![NodeStats::default()];
    for &(g, h) in gh {
        stats[0].add(g, h);
    }
    let mut frontier = vec![0usize];
    let mut slot_of_node: Vec<u32> = Vec::new();
    let mut slot_of_row = vec![INACTIVE; n];

    for _ in 0..cfg.max_depth {
        slot_of_node.clear();
        slot_of_node.resize(nodes.len(), INACTIVE);
        for (slot, &node) in frontier.iter().enumerate() {
            slot_of_node[node] = slot as u32;
        }
        for (row, s) in slot_of_row.iter_mut().enumerate() {
            *s = slot_of_node[node_of[row] as usize];
        }
        let totals: Vec<NodeStats> = frontier.iter().map(|&node| stats[node]).collect();
        let splits = scan_level(cols, &slot_of_row, &totals, gh, cfg);

        let mut children: Vec<Option<(usize, f64, u32, u32)>> = vec![None; frontier.len()];
        let mut next = Vec::new();
        for (slot, split) in splits.iter().enumerate() {
            let Some(split) = split else { continue };
            debug_assert!(split.gain > 0.0);
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(TreeNode::Leaf { weight: 0.0 });
            nodes.push(TreeNode::Leaf { weight: 0.0 });
            stats.push(NodeStats::default());
            stats.push(NodeStats::default());
            nodes[frontier[slot]] = TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                gain: split.gain,
                left,
                right,
            };
            children[slot] = Some((split.feature, split.threshold, left as u32, right as u32));
            next.push(left);
            next.push(right);
        }
        if next.is_empty() {
            break;
        }
        for row in 0..n {
            let s = slot_of_row[row];
            if s == INACTIVE {
                continue;
            }
            if let Some((feature, threshold, left, right)) = children[s as usize] {
                let child = if data.value(row, feature) < threshold {
                    left
                } else {
                    right
                };
                node_of[row] = child;
                stats[child as usize].add(gh[row].0, gh[row].1);
            }
        }
        debug_assert!(next
            .iter()
            .all(|&c| stats[c].hess >= cfg.min_child_weight - 1e-9 * (1.0 + cfg.min_child_weight)));
        frontier = next;
    }

    for (node, st) in nodes.iter_mut().zip(&stats) {
        if let TreeNode::Leaf { weight } = node {
            *weight = -st.grad / (st.hess + cfg.reg_lambda);
        }
    }
    (Tree { nodes }, node_of)
}

/// Grows one tree on all rows of `data`.
pub fn build_tree(data: &Dataset, grad: &[f64], hess: &[f64], cfg: &TrainConfig) -> Tree {
    let gh: Vec<(f64, f64)> = grad.iter().copied().zip(hess.iter().copied()).collect();
    let cols = SortedColumns::new(data, 0..data.n_rows());
    grow(&cols, data, &gh, cfg).0
}
