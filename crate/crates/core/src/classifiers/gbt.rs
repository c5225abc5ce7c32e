//! Gradient boosting on the log-odds with second-order tree fitting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Criterion, FeatureSampling, SortedColumns, TreeNode};
use super::{check_training, clamp_probability, label_mean, ClassifierError, FeatureMatrix};
use crate::rng;
use crate::surrender::profile::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// L1 penalty on leaf weights.
    pub alpha: f64,
    /// Minimum loss reduction for a split.
    pub gamma: f64,
    pub min_child_weight: f64,
    pub subsample: f64,
    pub colsample_bylevel: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            alpha: 0.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            colsample_bylevel: 1.0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidHyperparameter(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.lambda < 0.0 || self.alpha < 0.0 || self.gamma < 0.0 || self.min_child_weight < 0.0 {
            return bad("lambda, alpha, gamma and min_child_weight must be non-negative");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if !(self.colsample_bylevel > 0.0 && self.colsample_bylevel <= 1.0) {
            return bad("colsample_bylevel must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbt {
    /// Log-odds of the training base rate.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<TreeNode>,
}

impl Gbt {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        clamp_probability(sigmoid(self.raw_score(row)))
    }
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

pub(crate) struct SecondOrder<'a> {
    pub g: &'a [f64],
    pub h: &'a [f64],
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

impl SecondOrder<'_> {
    fn score(&self, a: &[f64; 3]) -> f64 {
        let t = soft_threshold(a[0], self.alpha);
        let d = a[1] + self.lambda;
        if d <= 0.0 {
            0.0
        } else {
            t * t / d
        }
    }
}

impl Criterion for SecondOrder<'_> {
    /// (sum g, sum h, rows)
    type Acc = [f64; 3];

    fn add(&self, acc: &mut [f64; 3], row: usize) {
        acc[0] += self.g[row];
        acc[1] += self.h[row];
        acc[2] += 1.0;
    }

    fn diff(&self, total: &[f64; 3], left: &[f64; 3]) -> [f64; 3] {
        [total[0] - left[0], total[1] - left[1], total[2] - left[2]]
    }

    fn gain(&self, parent: &[f64; 3], left: &[f64; 3], right: &[f64; 3]) -> Option<f64> {
        if left[1] < self.min_child_weight || right[1] < self.min_child_weight {
            return None;
        }
        Some(0.5 * (self.score(left) + self.score(right) - self.score(parent)) - self.gamma)
    }

    fn can_split(&self, acc: &[f64; 3]) -> bool {
        acc[2] >= 2.0 && acc[1] >= 2.0 * self.min_child_weight
    }

    fn leaf_value(&self, acc: &[f64; 3]) -> f64 {
        let d = acc[1] + self.lambda;
        if d <= 0.0 {
            0.0
        } else {
            -soft_threshold(acc[0], self.alpha) / d
        }
    }
}

/// Cross-entropy of labels under raw log-odds scores, probabilities clamped.
pub fn log_loss(y: &[u8], scores: &[f64]) -> f64 {
    y.iter()
        .zip(scores)
        .map(|(&yi, &f)| {
            let p = clamp_probability(sigmoid(f));
            if yi == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / y.len() as f64
}

/// Boosting with per-round training losses.
pub fn train_gbt_traced(
    x: &FeatureMatrix,
    y: &[u8],
    params: &GbtParams,
    seed: u64,
) -> Result<(Gbt, Vec<f64>), ClassifierError> {
    check_training(x, y)?;
    params.validate()?;
    let n = y.len();
    let base = label_mean(y);
    let base_score = {
        let b = clamp_probability(base);
        (b / (1.0 - b)).ln()
    };
    let sorted = SortedColumns::new(x);
    let mut f = vec![base_score; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut active = vec![true; n];
    let cols = ((params.colsample_bylevel * x.n_cols() as f64).floor() as usize).clamp(1, x.n_cols().max(1));
    let sampling = if cols >= x.n_cols() {
        FeatureSampling::All
    } else {
        FeatureSampling::PerLevel(cols)
    };
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut losses = Vec::with_capacity(params.n_estimators + 1);
    losses.push(log_loss(y, &f));
    let mut productive = 0usize;

    for round in 0..params.n_estimators {
        let mut s = rng::stream(seed, "gbt", &[round as u64]);
        for i in 0..n {
            let p = clamp_probability(sigmoid(f[i]));
            g[i] = p - f64::from(y[i]);
            h[i] = p * (1.0 - p);
        }
        if params.subsample < 1.0 {
            for a in active.iter_mut() {
                *a = s.random::<f64>() < params.subsample;
            }
        }
        let crit = SecondOrder {
            g: &g,
            h: &h,
            lambda: params.lambda,
            alpha: params.alpha,
            gamma: params.gamma,
            min_child_weight: params.min_child_weight,
        };
        let tree = grow(x, &sorted, &crit, &active, params.max_depth, sampling, &mut s);
        if matches!(tree, TreeNode::Split { .. }) {
            productive += 1;
        }
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += params.learning_rate * tree.predict(x.row(i));
        }
        losses.push(log_loss(y, &f));
        trees.push(tree);
    }
    if params.n_estimators > 0 && productive == 0 {
        log::warn!("no boosting round found a split with positive gain; the model is a constant");
    }
    Ok((
        Gbt {
            base_score,
            learning_rate: params.learning_rate,
            trees,
        },
        losses,
    ))
}

pub fn train_gbt(x: &FeatureMatrix, y: &[u8], params: &GbtParams, seed: u64) -> Result<Gbt, ClassifierError> {
    train_gbt_traced(x, y, params, seed).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> (FeatureMatrix, Vec<u8>) {
        let mut s = rng::stream(seed, "gbt-toy", &[]);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = s.random();
            let b: f64 = (s.random::<f64>() * 10.0).floor() / 10.0;
            data.extend([a, b]);
            let p = if a > 0.7 { 0.3 } else { 0.05 } + 0.1 * b;
            y.push(u8::from(s.random::<f64>() < p));
        }
        (FeatureMatrix::new(vec!["a".into(), "b".into()], vec![false; 2], data), y)
    }

    #[test]
    fn zero_rounds_predict_base_rate() {
        let (x, y) = toy(300, 1);
        let m = train_gbt(&x, &y, &GbtParams { n_estimators: 0, ..Default::default() }, 0).unwrap();
        let base = label_mean(&y);
        assert!((m.predict_row(x.row(0)) - base).abs() < 1e-12);
        let at_zero = Gbt { base_score: 0.0, learning_rate: 0.1, trees: vec![] };
        assert_eq!(at_zero.predict_row(&[0.3, 0.1]), 0.5);
    }

    #[test]
    fn constant_zero_labels_drive_predictions_down() {
        let (x, _) = toy(100, 2);
        let y = vec![0u8; 100];
        let mut prev = f64::INFINITY;
        for rounds in [1, 5, 20] {
            let params = GbtParams { n_estimators: rounds, max_depth: 1, lambda: 1.0, ..Default::default() };
            let p = train_gbt(&x, &y, &params, 0).unwrap().predict_row(x.row(0));
            assert!(p >= 1e-12 && p <= prev && p < 1e-11);
            prev = p;
        }
    }

    #[test]
    fn stump_weights_match_brute_force() {
        let (x, y) = toy(250, 3);
        let params = GbtParams {
            n_estimators: 1,
            max_depth: 1,
            learning_rate: 1.0,
            lambda: 0.0,
            alpha: 0.0,
            gamma: 0.0,
            min_child_weight: 0.0,
            subsample: 1.0,
            colsample_bylevel: 1.0,
        };
        let m = train_gbt(&x, &y, &params, 0).unwrap();
        // first round: every row shares p = base rate
        let base = label_mean(&y);
        let g: Vec<f64> = y.iter().map(|&v| base - f64::from(v)).collect();
        let h = base * (1.0 - base);
        let mut best = (f64::MIN, 0usize, 0.0f64);
        for f in 0..2 {
            let mut vals = x.column(f);
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = 0.5 * (w[0] + w[1]);
                let (mut gl, mut nl) = (0.0, 0.0);
                for i in 0..y.len() {
                    if x.get(i, f) <= thr {
                        gl += g[i];
                        nl += 1.0;
                    }
                }
                let gt: f64 = g.iter().sum();
                let gr = gt - gl;
                let nr = y.len() as f64 - nl;
                let gain = gl * gl / (nl * h) + gr * gr / (nr * h) - gt * gt / (y.len() as f64 * h);
                if gain > best.0 + 1e-9 {
                    best = (gain, f, thr);
                }
            }
        }
        let (_, f, thr) = best;
        let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..y.len() {
            if x.get(i, f) <= thr {
                gl += g[i];
                hl += h;
            } else {
                gr += g[i];
                hr += h;
            }
        }
        match &m.trees[0] {
            TreeNode::Split { feature, threshold, left, right } => {
                assert_eq!((*feature, *threshold), (f, thr));
                let (TreeNode::Leaf { value: wl }, TreeNode::Leaf { value: wr }) = (&**left, &**right) else {
                    panic!("stump expected");
                };
                assert!((wl + gl / hl).abs() < 1e-9 && (wr + gr / hr).abs() < 1e-9);
            }
            other => panic!("expected a stump, got {other:?}"),
        }
    }

    #[test]
    fn training_loss_never_increases_without_subsampling() {
        let (x, y) = toy(800, 4);
        let params = GbtParams { n_estimators: 60, max_depth: 3, learning_rate: 0.3, ..Default::default() };
        let (_, losses) = train_gbt_traced(&x, &y, &params, 0).unwrap();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn calibrated_on_training_data() {
        let (x, y) = toy(2_000, 5);
        let params = GbtParams { n_estimators: 50, ..Default::default() };
        let m = train_gbt(&x, &y, &params, 0).unwrap();
        let mean = (0..x.n_rows()).map(|i| m.predict_row(x.row(i))).sum::<f64>() / x.n_rows() as f64;
        assert!((mean - label_mean(&y)).abs() < 0.005);
    }

    #[test]
    fn subsampled_runs_are_deterministic() {
        let (x, y) = toy(500, 6);
        let params = GbtParams { n_estimators: 20, subsample: 0.7, colsample_bylevel: 0.5, ..Default::default() };
        assert_eq!(train_gbt(&x, &y, &params, 8).unwrap(), train_gbt(&x, &y, &params, 8).unwrap());
        assert_ne!(train_gbt(&x, &y, &params, 8).unwrap(), train_gbt(&x, &y, &params, 9).unwrap());
    }
}
