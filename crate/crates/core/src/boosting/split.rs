use super::{Dataset, TrainConfig};

pub(crate) const INACTIVE: u32 = u32::MAX;
const NO_RANK: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Rows with `x[feature] < threshold` go left.
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct NodeStats {
    pub grad: f64,
    pub hess: f64,
}

impl NodeStats {
    #[inline]
    pub fn add(&mut self, g: f64, h: f64) {
        self.grad += g;
        self.hess += h;
    }
}

/// Per-feature `(row, rank)` pairs in ascending value order (ties by row), where
/// `rank` indexes the feature's distinct values; computed once per training set.
pub(crate) struct SortedColumns {
    cols: Vec<Vec<(u32, u32)>>,
    distinct: Vec<Vec<f64>>,
}

impl SortedColumns {
    pub fn new(data: &Dataset, rows: impl Iterator<Item = usize> + Clone) -> Self {
        let (cols, distinct) = (0..data.n_features())
            .map(|f| {
                let mut col: Vec<(f64, u32)> =
                    rows.clone().map(|r| (data.value(r, f), r as u32)).collect();
                col.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut distinct: Vec<f64> = Vec::new();
                let ranked = col
                    .iter()
                    .map(|&(v, r)| {
                        if distinct.last() != Some(&v) {
                            distinct.push(v);
                        }
                        (r, (distinct.len() - 1) as u32)
                    })
                    .collect();
                (ranked, distinct)
            })
            .unzip();
        Self { cols, distinct }
    }
}

/// Second-order gain of splitting a node with totals `(G, H)` into `(G_L, H_L)` and
/// the complement.
#[inline]
pub fn split_gain(
    g_left: f64,
    h_left: f64,
    g_total: f64,
    h_total: f64,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let g_right = g_total - g_left;
    let h_right = h_total - h_left;
    0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda)
        - g_total * g_total / (h_total + lambda))
        - gamma
}

#[inline]
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = 0.5 * lo + 0.5 * hi;
    // adjacent floats: the rounded midpoint may collapse onto `lo`
    if m > lo {
        m
    } else {
        hi
    }
}

/// Finds the best split of every active node in one sweep per feature.
///
/// `slot_of_row[r]` is the slot of the node holding row `r`, or [`INACTIVE`]. Ties in
/// gain keep the earlier candidate, i.e. the lowest feature and then the lowest
/// threshold.
pub(crate) fn scan_level(
    cols: &SortedColumns,
    slot_of_row: &[u32],
    totals: &[NodeStats],
    gh: &[(f64, f64)],
    cfg: &TrainConfig,
) -> Vec<Option<SplitCandidate>> {
    #[derive(Clone, Copy)]
    struct Slot {
        left_grad: f64,
        left_hess: f64,
        last: u32,
        total_grad: f64,
        total_hess: f64,
        parent: f64,
        best_gain: f64,
        best_threshold: f64,
        best_feature: usize,
    }

    let lambda = cfg.reg_lambda;
    let mcw = cfg.min_child_weight;
    let gamma = cfg.gamma;
    let mut slots: Vec<Slot> = totals
        .iter()
        .map(|t| Slot {
            left_grad: 0.0,
            left_hess: 0.0,
            last: NO_RANK,
            total_grad: t.grad,
            total_hess: t.hess,
            parent: t.grad * t.grad / (t.hess + lambda),
            best_gain: 0.0,
            best_threshold: f64::NAN,
            best_feature: usize::MAX,
        })
        .collect();
    // one random access per sorted entry instead of two
    let packed: Vec<(f64, f64, u32)> = gh
        .iter()
        .zip(slot_of_row)
        .map(|(&(g, h), &s)| (g, h, s))
        .collect();

    for (feature, (col, distinct)) in cols.cols.iter().zip(&cols.distinct).enumerate() {
        for s in slots.iter_mut() {
            s.left_grad = 0.0;
            s.left_hess = 0.0;
            s.last = NO_RANK;
        }
        for &(row, v) in col {
            let (g, h, slot) = packed[row as usize];
            if slot == INACTIVE {
                continue;
            }
            let s = &mut slots[slot as usize];
            // ranks ascend along the column; nothing exceeds `NO_RANK`, so the first
            // row of a node is never a cut
            if v > s.last {
                let hl = s.left_hess;
                let hr = s.total_hess - hl;
                if hl >= mcw && hr >= mcw {
                    let gl = s.left_grad;
                    let gr = s.total_grad - gl;
                    let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - s.parent)
                        - gamma;
                    // strict: ties keep the earlier candidate, and gain must be positive
                    if gain > s.best_gain {
                        s.best_gain = gain;
                        s.best_threshold =
                            midpoint(distinct[s.last as usize], distinct[v as usize]);
                        s.best_feature = feature;
                    }
                }
            }
            s.left_grad += g;
            s.left_hess += h;
            s.last = v;
        }
    }
    slots
        .iter()
        .map(|s| {
            (s.best_feature != usize::MAX).then_some(SplitCandidate {
                feature: s.best_feature,
                threshold: s.best_threshold,
                gain: s.best_gain,
            })
        })
        .collect()
}

/// Best admissible split of the node made of `rows`, with gradients and hessians
/// indexed by dataset row. `None` when no split has positive gain with both children
/// meeting `min_child_weight`.
pub fn best_split(
    data: &Dataset,
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    cfg: &TrainConfig,
) -> Option<SplitCandidate> {
    if rows.len() < 2 {
        return None;
    }
    let n = data.n_rows();
    let mut slot_of_row = vec![INACTIVE; n];
    let mut total = NodeStats::default();
    for &r in rows {
        slot_of_row[r] = 0;
        total.add(grad[r], hess[r]);
    }
    let gh: Vec<(f64, f64)> = grad.iter().copied().zip(hess.iter().copied()).collect();
    let cols = SortedColumns::new(data, rows.iter().copied());
    scan_level(&cols, &slot_of_row, &[total], &gh, cfg)[0]
}
