use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_entropy_tree, xlnx_table, CartParams, FeatureSampling, SortedColumns, TreeNode};
use super::{check_training, ClassifierError, FeatureMatrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    /// Share of columns offered to each split, at least one.
    pub max_features: f64,
    pub bootstrap: bool,
    #[serde(default = "two")]
    pub min_samples_split: u32,
    #[serde(default = "one")]
    pub min_samples_leaf: u32,
}

fn two() -> u32 {
    2
}

fn one() -> u32 {
    1
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.n_estimators == 0 {
            return Err(ClassifierError::InvalidHyperparameter("n_estimators must be positive".into()));
        }
        if !(self.max_features > 0.0 && self.max_features <= 1.0) {
            return Err(ClassifierError::InvalidHyperparameter(format!(
                "max_features must lie in (0, 1], got {}",
                self.max_features
            )));
        }
        self.cart().validate()
    }

    fn cart(&self) -> CartParams {
        CartParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
        }
    }

    pub fn features_per_split(&self, n_cols: usize) -> usize {
        ((self.max_features * n_cols as f64).floor() as usize).clamp(1, n_cols.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<TreeNode>,
}

impl RandomForest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Tree `t` draws its bootstrap sample and feature subsets from its own
/// stream, so the forest does not depend on how trees are scheduled.
pub fn train_forest(x: &FeatureMatrix, y: &[u8], params: &ForestParams, seed: u64) -> Result<RandomForest, ClassifierError> {
    check_training(x, y)?;
    params.validate()?;
    let n = y.len();
    let sorted = SortedColumns::new(x);
    let xlnx = xlnx_table(n);
    let cart = params.cart();
    let per_split = params.features_per_split(x.n_cols());
    let sampling = if per_split >= x.n_cols() {
        FeatureSampling::All
    } else {
        FeatureSampling::PerNode(per_split)
    };
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut s = rng::stream(seed, "forest", &[t as u64]);
            let weights = if params.bootstrap {
                let mut w = vec![0u32; n];
                for _ in 0..n {
                    w[s.random_range(0..n)] += 1;
                }
                w
            } else {
                vec![1u32; n]
            };
            grow_entropy_tree(x, y, &sorted, &weights, &xlnx, &cart, sampling, &mut s)
        })
        .collect();
    Ok(RandomForest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::tree::train_cart;

    fn toy(n: usize, seed: u64) -> (FeatureMatrix, Vec<u8>) {
        let mut s = rng::stream(seed, "forest-toy", &[]);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = s.random();
            let b: f64 = s.random();
            let c: f64 = s.random();
            data.extend([a, b, c]);
            let p = 0.05 + 0.4 * f64::from(u8::from(a > 0.6)) + 0.2 * b;
            y.push(u8::from(s.random::<f64>() < p));
        }
        (FeatureMatrix::new(vec!["a".into(), "b".into(), "c".into()], vec![false; 3], data), y)
    }

    #[test]
    fn single_full_tree_equals_cart() {
        let (x, y) = toy(400, 1);
        let params = ForestParams {
            n_estimators: 1,
            max_depth: 5,
            max_features: 1.0,
            bootstrap: false,
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        let forest = train_forest(&x, &y, &params, 9).unwrap();
        let cart = train_cart(&x, &y, &params.cart()).unwrap();
        assert_eq!(forest.trees[0], cart);
    }

    #[test]
    fn identical_trees_predict_their_leaf() {
        let (x, y) = toy(200, 2);
        let params = ForestParams {
            n_estimators: 4,
            max_depth: 3,
            max_features: 1.0,
            bootstrap: false,
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        let forest = train_forest(&x, &y, &params, 0).unwrap();
        for i in 0..x.n_rows() {
            assert_eq!(forest.predict_row(x.row(i)), forest.trees[0].predict(x.row(i)));
        }
    }

    #[test]
    fn ensemble_variance_below_member_variance() {
        let (x, y) = toy(1_000, 3);
        let params = ForestParams {
            n_estimators: 25,
            max_depth: 6,
            max_features: 0.67,
            bootstrap: true,
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        let forest = train_forest(&x, &y, &params, 5).unwrap();
        let grid: Vec<[f64; 3]> = (0..100).map(|i| [i as f64 / 99.0, 0.5, (i % 7) as f64 / 7.0]).collect();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let ens: Vec<f64> = grid.iter().map(|g| forest.predict_row(g)).collect();
        assert!(ens.iter().all(|p| (0.0..=1.0).contains(p)));
        let member_mean = forest
            .trees
            .iter()
            .map(|t| var(&grid.iter().map(|g| t.predict(g)).collect::<Vec<_>>()))
            .sum::<f64>()
            / forest.trees.len() as f64;
        assert!(var(&ens) <= member_mean);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (x, y) = toy(600, 4);
        let params = ForestParams {
            n_estimators: 12,
            max_depth: 5,
            max_features: 0.5,
            bootstrap: true,
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train_forest(&x, &y, &params, 11).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
