//! Latent surrender behaviour: profiles, event simulation and dataset assembly.

pub mod dataset;
pub mod profile;
pub mod simulate;

use thiserror::Error;

pub use dataset::{
    columns_for, preprocess, split_in_time, Dataset, ObservationRecord, Scaler, COLUMN_NAMES,
    N_COLUMNS,
};
pub use profile::{
    calibrate_intercept, effect_from_odds_ratio, profile_probability, StepFunction,
    SurrenderProfile,
};
pub use simulate::{simulate_events, SimulationSettings};

#[derive(Debug, Error)]
pub enum SurrenderError {
    #[error("odds ratio must be positive, got {0}")]
    InvalidOddsRatio(f64),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("target rate must lie in (0, 1), got {0}")]
    InvalidTargetRate(f64),
    #[error("calibration reference portfolio is empty")]
    EmptyReference,
    #[error(
        "intercept search [{lo}, {hi}] does not bracket target {target} (mean rates {mean_lo} .. {mean_hi})"
    )]
    CalibrationBracket {
        lo: f64,
        hi: f64,
        mean_lo: f64,
        mean_hi: f64,
        target: f64,
    },
    #[error("simulation horizon must be at least one year")]
    InvalidHorizon,
    #[error("split share must lie in (0, 1), got {0}")]
    InvalidShare(f64),
    #[error("cannot split a dataset spanning {0} calendar year(s)")]
    DegenerateSplit(usize),
    #[error("empty dataset ({0})")]
    EmptyDataset(&'static str),
    #[error("dataset is already preprocessed")]
    AlreadyScaled,
    #[error("dataset schema: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}
