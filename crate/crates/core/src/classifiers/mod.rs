//! Probabilistic binary classifiers: constant baseline, bagged penalized
//! logistic regression, CART, random forest and second-order boosted trees.

pub mod forest;
pub mod gbt;
pub mod logistic;
pub mod persistence;
pub mod presets;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surrender::dataset::{is_indicator, COLUMN_NAMES};
use crate::surrender::Dataset;

pub use forest::{ForestParams, RandomForest};
pub use gbt::{Gbt, GbtParams};
pub use logistic::{LogisticBag, LogisticParams, Penalty};
pub use tree::{CartParams, TreeNode};

/// Lower and upper clamp for probabilities entering a log.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("feature schema mismatch: model expects {expected:?}, got {found:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("optimizer stopped after {iterations} iterations with gradient norm {gradient_norm:e}")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Dense row-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    /// Per column: 0/1 indicator (left out of polynomial expansion).
    pub indicator: Vec<bool>,
    n_rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, indicator: Vec<bool>, data: Vec<f64>) -> Self {
        assert_eq!(names.len(), indicator.len());
        let p = names.len();
        let n_rows = if p == 0 { 0 } else { data.len() / p };
        assert_eq!(n_rows * p, data.len(), "data length is not a multiple of the column count");
        Self {
            names,
            indicator,
            n_rows,
            data,
        }
    }

    /// A matrix with `n_rows` rows and no columns.
    pub fn empty(n_rows: usize) -> Self {
        Self {
            names: vec![],
            indicator: vec![],
            n_rows,
            data: vec![],
        }
    }

    /// Selects stored dataset columns, in the given order.
    pub fn from_dataset(dataset: &Dataset, columns: &[usize]) -> Self {
        let names = columns.iter().map(|&c| COLUMN_NAMES[c].to_string()).collect();
        let indicator = columns.iter().map(|&c| is_indicator(c)).collect();
        let mut data = Vec::with_capacity(dataset.len() * columns.len());
        for r in &dataset.records {
            data.extend(columns.iter().map(|&c| r.x[c]));
        }
        Self {
            names,
            indicator,
            n_rows: dataset.len(),
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    LogisticBag,
    Cart,
    RandomForest,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        Self::Baseline,
        Self::LogisticBag,
        Self::Cart,
        Self::RandomForest,
        Self::Gbt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::LogisticBag => "logistic_bag",
            Self::Cart => "cart",
            Self::RandomForest => "random_forest",
            Self::Gbt => "gbt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Self::Baseline),
            "logistic" | "logistic_bag" | "logit" => Ok(Self::LogisticBag),
            "cart" | "tree" => Ok(Self::Cart),
            "random_forest" | "forest" | "rf" => Ok(Self::RandomForest),
            "gbt" | "xgboost" | "boosting" => Ok(Self::Gbt),
            other => Err(format!(
                "unknown model '{other}' (expected baseline, logistic_bag, cart, random_forest or gbt)"
            )),
        }
    }
}

/// Model kind together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Baseline,
    LogisticBag(LogisticParams),
    Cart(CartParams),
    RandomForest(ForestParams),
    Gbt(GbtParams),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Baseline => ModelKind::Baseline,
            Self::LogisticBag(_) => ModelKind::LogisticBag,
            Self::Cart(_) => ModelKind::Cart,
            Self::RandomForest(_) => ModelKind::RandomForest,
            Self::Gbt(_) => ModelKind::Gbt,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self {
            Self::Baseline => Ok(()),
            Self::LogisticBag(p) => p.validate(),
            Self::Cart(p) => p.validate(),
            Self::RandomForest(p) => p.validate(),
            Self::Gbt(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub spec: ModelSpec,
    /// Label mean of the data the model was fitted on.
    pub base_rate: f64,
    pub n_train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Baseline { rate: f64 },
    LogisticBag(LogisticBag),
    Cart { tree: TreeNode },
    RandomForest(RandomForest),
    Gbt(Gbt),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub feature_schema: Vec<String>,
    pub meta: TrainingMeta,
    pub params: ModelParams,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.meta.spec.kind()
    }

    /// Probability for one row already in schema order; no schema check.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Baseline { rate } => *rate,
            ModelParams::LogisticBag(m) => m.predict_row(row),
            ModelParams::Cart { tree } => tree.predict(row),
            ModelParams::RandomForest(m) => m.predict_row(row),
            ModelParams::Gbt(m) => m.predict_row(row),
        }
    }

    pub fn check_schema(&self, x: &FeatureMatrix) -> Result<(), ClassifierError> {
        if x.names != self.feature_schema {
            return Err(ClassifierError::SchemaMismatch {
                expected: self.feature_schema.clone(),
                found: x.names.clone(),
            });
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ClassifierError> {
        self.check_schema(x)?;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| self.predict_row(x.row(i)))
            .collect())
    }
}

fn check_training(x: &FeatureMatrix, y: &[u8]) -> Result<(), ClassifierError> {
    if x.n_rows() != y.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: x.n_rows(),
            labels: y.len(),
        });
    }
    if y.is_empty() {
        return Err(ClassifierError::EmptyTrain);
    }
    Ok(())
}

pub fn label_mean(y: &[u8]) -> f64 {
    y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64
}

/// Fits the model described by `spec`. All randomness derives from `seed`.
pub fn train(spec: &ModelSpec, x: &FeatureMatrix, y: &[u8], seed: u64) -> Result<TrainedModel, ClassifierError> {
    check_training(x, y)?;
    let base_rate = label_mean(y);
    let params = match spec {
        ModelSpec::Baseline => ModelParams::Baseline { rate: base_rate },
        ModelSpec::LogisticBag(p) => ModelParams::LogisticBag(logistic::train_bag(x, y, p, seed)?),
        ModelSpec::Cart(p) => ModelParams::Cart {
            tree: tree::train_cart(x, y, p)?,
        },
        ModelSpec::RandomForest(p) => ModelParams::RandomForest(forest::train_forest(x, y, p, seed)?),
        ModelSpec::Gbt(p) => ModelParams::Gbt(gbt::train_gbt(x, y, p, seed)?),
    };
    Ok(TrainedModel {
        feature_schema: x.names.clone(),
        meta: TrainingMeta {
            seed,
            spec: spec.clone(),
            base_rate,
            n_train: y.len(),
        },
        params,
    })
}

pub fn train_baseline(x: &FeatureMatrix, y: &[u8]) -> Result<TrainedModel, ClassifierError> {
    train(&ModelSpec::Baseline, x, y, 0)
}
