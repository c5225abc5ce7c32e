//! Tuned hyperparameters per shipped surrender profile (1 to 4).

use super::{CartParams, ForestParams, GbtParams, LogisticParams, ModelKind, ModelSpec, Penalty};

pub const PROFILES: [u8; 4] = [1, 2, 3, 4];

pub fn logistic(profile: u8) -> Option<LogisticParams> {
    let (penalty, c) = match profile {
        1 => (Penalty::L2, 1.26e8),
        2 => (Penalty::L1, 4.05),
        3 => (Penalty::L2, 8.22e6),
        4 => (Penalty::L2, 0.22),
        _ => return None,
    };
    Some(LogisticParams::new(penalty, c))
}

pub fn forest(profile: u8) -> Option<ForestParams> {
    let (bootstrap, max_depth, max_features, n_estimators) = match profile {
        1 => (false, 7, 0.6, 336),
        2 => (true, 5, 1.0, 403),
        3 => (true, 8, 0.7, 1303),
        4 => (true, 8, 0.5, 1202),
        _ => return None,
    };
    Some(ForestParams {
        n_estimators,
        max_depth,
        max_features,
        bootstrap,
        min_samples_split: 2,
        min_samples_leaf: 1,
    })
}

pub fn gbt(profile: u8) -> Option<GbtParams> {
    // colsample_bylevel, gamma, learning_rate, max_depth, min_child_weight,
    // n_estimators, alpha, lambda, subsample
    let row = match profile {
        1 => (0.80, 4.58, 0.01, 3, 10.0, 920, 0.00, 1.52, 0.71),
        2 => (0.52, 1.45, 0.30, 1, 70.0, 980, 0.00, 1.07, 0.99),
        3 => (0.62, 1.72, 0.33, 1, 51.0, 320, 0.74, 1.37, 0.96),
        4 => (0.99, 2.57, 0.03, 2, 10.0, 780, 0.023, 1.00, 0.64),
        _ => return None,
    };
    let (colsample_bylevel, gamma, learning_rate, max_depth, min_child_weight, n_estimators, alpha, lambda, subsample) = row;
    Some(GbtParams {
        n_estimators,
        max_depth,
        learning_rate,
        lambda,
        alpha,
        gamma,
        min_child_weight,
        subsample,
        colsample_bylevel,
    })
}

/// Preset for `kind` under `profile`; CART and the baseline are shared.
pub fn spec(kind: ModelKind, profile: u8) -> Option<ModelSpec> {
    Some(match kind {
        ModelKind::Baseline => ModelSpec::Baseline,
        ModelKind::Cart => ModelSpec::Cart(CartParams::default()),
        ModelKind::LogisticBag => ModelSpec::LogisticBag(logistic(profile)?),
        ModelKind::RandomForest => ModelSpec::RandomForest(forest(profile)?),
        ModelKind::Gbt => ModelSpec::Gbt(gbt(profile)?),
    })
}
