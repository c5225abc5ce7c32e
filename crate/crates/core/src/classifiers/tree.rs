//! Binary decision trees and the exact greedy, level-wise grower shared by
//! CART, the random forest and boosting.
//!
//! Every column is sorted once; growing one level is a single pass over each
//! sorted column that updates running statistics for all frontier nodes at
//! once. Candidate thresholds are midpoints between consecutive distinct
//! values. Equal gains keep the lowest column, then the lowest threshold.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_training, ClassifierError, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Rows with `x[feature] <= threshold`.
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        match self {
            TreeNode::Leaf { value } => vec![*value],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_samples_split: u32,
    pub min_samples_leaf: u32,
}

impl Default for CartParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl CartParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.min_samples_split < 2 || self.min_samples_leaf < 1 {
            return Err(ClassifierError::InvalidHyperparameter(
                "min_samples_split must be >= 2 and min_samples_leaf >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Row order of every column by value (ties by row index), with the sorted
/// values alongside so scans stay sequential.
pub(crate) struct SortedColumns {
    order: Vec<Vec<u32>>,
    values: Vec<Vec<f64>>,
}

impl SortedColumns {
    pub(crate) fn new(x: &FeatureMatrix) -> Self {
        let n = x.n_rows();
        let mut order = Vec::with_capacity(x.n_cols());
        let mut values = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let col = x.column(j);
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            values.push(idx.iter().map(|&i| col[i as usize]).collect());
            order.push(idx);
        }
        Self { order, values }
    }
}

/// Split statistics of a node and the gain of a candidate split.
pub(crate) trait Criterion {
    type Acc: Copy + Default;

    fn add(&self, acc: &mut Self::Acc, row: usize);
    fn diff(&self, total: &Self::Acc, left: &Self::Acc) -> Self::Acc;
    /// Gain of splitting `parent` into `left` and `right`; `None` when the
    /// children violate a size constraint. Only positive gains split.
    fn gain(&self, parent: &Self::Acc, left: &Self::Acc, right: &Self::Acc) -> Option<f64>;
    fn can_split(&self, acc: &Self::Acc) -> bool;
    fn leaf_value(&self, acc: &Self::Acc) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum FeatureSampling {
    All,
    /// A fresh subset of this many columns for every node.
    PerNode(usize),
    /// One subset of this many columns per tree level.
    PerLevel(usize),
}

enum Slot {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

const INACTIVE: u32 = u32::MAX;

fn nest(arena: &[Slot], i: usize) -> TreeNode {
    match arena[i] {
        Slot::Leaf(value) => TreeNode::Leaf { value },
        Slot::Split {
            feature,
            threshold,
            left,
            right,
        } => TreeNode::Split {
            feature,
            threshold,
            left: Box::new(nest(arena, left)),
            right: Box::new(nest(arena, right)),
        },
    }
}

fn feature_mask<R: Rng + ?Sized>(p: usize, count: usize, rng: &mut R) -> u64 {
    if count >= p {
        return (1u64 << p) - 1;
    }
    index::sample(rng, p, count).into_iter().fold(0u64, |m, j| m | (1 << j))
}

/// Grows one tree over the rows with `active[r]`.
pub(crate) fn grow<C: Criterion, R: Rng + ?Sized>(
    x: &FeatureMatrix,
    sorted: &SortedColumns,
    crit: &C,
    active: &[bool],
    max_depth: usize,
    sampling: FeatureSampling,
    rng: &mut R,
) -> TreeNode {
    let p = x.n_cols();
    assert!(p <= 64, "trees support at most 64 columns");
    let mut node_of: Vec<u32> = active.iter().map(|&a| if a { 0 } else { INACTIVE }).collect();
    let mut root = C::Acc::default();
    for (r, &a) in active.iter().enumerate() {
        if a {
            crit.add(&mut root, r);
        }
    }
    // frontier node k lives at arena[ids[k]]
    let mut arena: Vec<Slot> = vec![Slot::Leaf(crit.leaf_value(&root))];
    let mut ids = vec![0usize];
    let mut totals = vec![root];

    for depth in 0..=max_depth {
        let k_count = ids.len();
        if k_count == 0 {
            break;
        }
        let splittable: Vec<bool> = totals
            .iter()
            .map(|t| depth < max_depth && crit.can_split(t))
            .collect();
        if !splittable.iter().any(|&s| s) {
            break;
        }
        let masks: Vec<u64> = match sampling {
            FeatureSampling::All => vec![(1u64 << p) - 1; k_count],
            FeatureSampling::PerLevel(c) => vec![feature_mask(p, c, rng); k_count],
            FeatureSampling::PerNode(c) => splittable
                .iter()
                .map(|&s| if s { feature_mask(p, c, rng) } else { 0 })
                .collect(),
        };

        let mut best: Vec<Option<(f64, usize, f64)>> = vec![None; k_count];
        let mut running = vec![C::Acc::default(); k_count];
        let mut last = vec![f64::NAN; k_count];
        for f in 0..p {
            let bit = 1u64 << f;
            if !masks.iter().zip(&splittable).any(|(m, &s)| s && m & bit != 0) {
                continue;
            }
            running.iter_mut().for_each(|a| *a = C::Acc::default());
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for (&r, &v) in sorted.order[f].iter().zip(&sorted.values[f]) {
                let k = node_of[r as usize];
                if k == INACTIVE {
                    continue;
                }
                let k = k as usize;
                if !splittable[k] || masks[k] & bit == 0 {
                    continue;
                }
                let prev = last[k];
                if v > prev {
                    let left = running[k];
                    let right = crit.diff(&totals[k], &left);
                    if let Some(g) = crit.gain(&totals[k], &left, &right) {
                        if g > 0.0 && best[k].is_none_or(|(bg, _, _)| g > bg) {
                            let mut thr = 0.5 * (prev + v);
                            if thr >= v {
                                thr = prev;
                            }
                            best[k] = Some((g, f, thr));
                        }
                    }
                }
                crit.add(&mut running[k], r as usize);
                last[k] = v;
            }
        }

        // children of split nodes form the next frontier
        let mut child_of = vec![(INACTIVE, INACTIVE); k_count];
        let mut next_ids = Vec::new();
        for k in 0..k_count {
            if let Some((_, feature, threshold)) = best[k] {
                let (l, r) = (arena.len(), arena.len() + 1);
                arena.push(Slot::Leaf(0.0));
                arena.push(Slot::Leaf(0.0));
                arena[ids[k]] = Slot::Split {
                    feature,
                    threshold,
                    left: l,
                    right: r,
                };
                child_of[k] = (next_ids.len() as u32, next_ids.len() as u32 + 1);
                next_ids.push(l);
                next_ids.push(r);
            }
        }
        if next_ids.is_empty() {
            break;
        }
        let mut next_totals = vec![C::Acc::default(); next_ids.len()];
        for (r, slot) in node_of.iter_mut().enumerate() {
            if *slot == INACTIVE {
                continue;
            }
            let k = *slot as usize;
            match best[k] {
                Some((_, f, thr)) => {
                    let c = if x.get(r, f) <= thr { child_of[k].0 } else { child_of[k].1 };
                    crit.add(&mut next_totals[c as usize], r);
                    *slot = c;
                }
                None => *slot = INACTIVE,
            }
        }
        for (id, t) in next_ids.iter().zip(&next_totals) {
            arena[*id] = Slot::Leaf(crit.leaf_value(t));
        }
        ids = next_ids;
        totals = next_totals;
    }
    nest(&arena, 0)
}

/// `k ln k` for the integer weights a node can hold.
pub(crate) fn xlnx_table(max: usize) -> Vec<f64> {
    (0..=max)
        .map(|k| if k == 0 { 0.0 } else { k as f64 * (k as f64).ln() })
        .collect()
}

/// Entropy reduction on integer-weighted rows (bootstrap multiplicities).
pub(crate) struct Entropy<'a> {
    pub y: &'a [u8],
    pub w: &'a [u32],
    pub xlnx: &'a [f64],
    pub min_split: u32,
    pub min_leaf: u32,
}

impl Entropy<'_> {
    /// Minus the weighted entropy (in nats) of a node with `n` rows, `pos` positive.
    fn neg_weighted_entropy(&self, [n, pos]: [u32; 2]) -> f64 {
        self.xlnx[pos as usize] + self.xlnx[(n - pos) as usize] - self.xlnx[n as usize]
    }
}

impl Criterion for Entropy<'_> {
    type Acc = [u32; 2];

    fn add(&self, acc: &mut [u32; 2], row: usize) {
        let w = self.w[row];
        acc[0] += w;
        acc[1] += w * u32::from(self.y[row]);
    }

    fn diff(&self, total: &[u32; 2], left: &[u32; 2]) -> [u32; 2] {
        [total[0] - left[0], total[1] - left[1]]
    }

    fn gain(&self, parent: &[u32; 2], left: &[u32; 2], right: &[u32; 2]) -> Option<f64> {
        if left[0] < self.min_leaf || right[0] < self.min_leaf {
            return None;
        }
        let g = self.neg_weighted_entropy(*left) + self.neg_weighted_entropy(*right)
            - self.neg_weighted_entropy(*parent);
        // drop splits that only reflect rounding
        Some(if g > 1e-9 * f64::from(parent[0]) { g } else { 0.0 })
    }

    fn can_split(&self, acc: &[u32; 2]) -> bool {
        acc[0] >= self.min_split && acc[1] > 0 && acc[1] < acc[0]
    }

    fn leaf_value(&self, acc: &[u32; 2]) -> f64 {
        if acc[0] == 0 {
            0.0
        } else {
            f64::from(acc[1]) / f64::from(acc[0])
        }
    }
}

/// Entropy-grown tree on integer row weights; rows of weight 0 are left out.
pub(crate) fn grow_entropy_tree<R: Rng + ?Sized>(
    x: &FeatureMatrix,
    y: &[u8],
    sorted: &SortedColumns,
    weights: &[u32],
    xlnx: &[f64],
    params: &CartParams,
    sampling: FeatureSampling,
    rng: &mut R,
) -> TreeNode {
    let crit = Entropy {
        y,
        w: weights,
        xlnx,
        min_split: params.min_samples_split,
        min_leaf: params.min_samples_leaf,
    };
    let active: Vec<bool> = weights.iter().map(|&w| w > 0).collect();
    grow(x, sorted, &crit, &active, params.max_depth, sampling, rng)
}

pub fn train_cart(x: &FeatureMatrix, y: &[u8], params: &CartParams) -> Result<TreeNode, ClassifierError> {
    check_training(x, y)?;
    params.validate()?;
    let sorted = SortedColumns::new(x);
    let weights = vec![1u32; y.len()];
    let xlnx = xlnx_table(y.len());
    // no randomness is consumed with all features in play
    let mut unused = crate::rng::stream(0, "cart", &[]);
    Ok(grow_entropy_tree(
        x,
        y,
        &sorted,
        &weights,
        &xlnx,
        params,
        FeatureSampling::All,
        &mut unused,
    ))
}
