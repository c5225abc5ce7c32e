//! Library-level building blocks of an experiment: calibrated simulation,
//! split and preprocessing, model training and prediction on datasets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LabError;
use crate::classifiers::{self, FeatureMatrix, ModelSpec, TrainedModel};
use crate::portfolio::{generate_initial_portfolio, Portfolio, PricingBasis};
use crate::resampling::{self, bias_correct, ResamplePlan};
use crate::surrender::{
    calibrate_intercept, columns_for, preprocess, simulate_events, split_in_time, Dataset, Scaler,
    SimulationSettings, SurrenderProfile,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n0: usize,
    pub horizon: u32,
    pub new_business_rate: f64,
    pub pricing: PricingBasis,
    pub tie_rule: bool,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            n0: 30_000,
            horizon: 15,
            new_business_rate: 0.06,
            pricing: PricingBasis::default(),
            tie_rule: true,
        }
    }
}

impl SimulationSpec {
    /// Laptop-sized setting used throughout the examples and acceptance suite.
    pub fn desk() -> Self {
        Self {
            n0: 5_000,
            horizon: 10,
            ..Self::default()
        }
    }

    pub fn settings(&self) -> SimulationSettings {
        SimulationSettings {
            horizon_years: self.horizon,
            new_business_rate: self.new_business_rate,
            pricing: self.pricing,
            tie_rule: self.tie_rule,
        }
    }
}

/// Replaces the intercept by the calibrated one when the profile carries a
/// target rate; the initial portfolio is the calibration reference.
pub fn calibrate(profile: &SurrenderProfile, initial: &Portfolio) -> Result<SurrenderProfile, LabError> {
    let mut out = profile.clone();
    if let Some(target) = profile.target_rate {
        out.intercept = calibrate_intercept(profile, &initial.contracts, target)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub profile: SurrenderProfile,
    pub initial: Portfolio,
    pub raw: Dataset,
}

pub fn simulate(profile: &SurrenderProfile, spec: &SimulationSpec, seed: u64) -> Result<Simulated, LabError> {
    let initial = generate_initial_portfolio(spec.n0, seed, &spec.pricing);
    let profile = calibrate(profile, &initial)?;
    let raw = simulate_events(&initial, &profile, &spec.settings(), seed)?;
    Ok(Simulated { profile, initial, raw })
}

/// Train and test data after the split in time and min-max preprocessing.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub profile: SurrenderProfile,
    pub raw: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub scaler: Scaler,
    pub split_year: u32,
}

impl Prepared {
    /// Stored columns the models see: the profile's risk drivers.
    pub fn columns(&self) -> Vec<usize> {
        model_columns(&self.profile)
    }
}

pub fn model_columns(profile: &SurrenderProfile) -> Vec<usize> {
    columns_for(&profile.features())
}

pub fn split_and_scale(raw: &Dataset, share: f64) -> Result<(Dataset, Dataset, Scaler, u32), LabError> {
    let (train, test) = split_in_time(raw, share)?;
    let split_year = train.split_year.expect("split sets the split year");
    let (train, test, scaler) = preprocess(&train, &test)?;
    Ok((train, test, scaler, split_year))
}

pub fn prepare(profile: &SurrenderProfile, spec: &SimulationSpec, share: f64, seed: u64) -> Result<Prepared, LabError> {
    let sim = simulate(profile, spec, seed)?;
    let (train, test, scaler, split_year) = split_and_scale(&sim.raw, share)?;
    Ok(Prepared {
        profile: sim.profile,
        raw: sim.raw,
        train,
        test,
        scaler,
        split_year,
    })
}

pub fn fit(spec: &ModelSpec, data: &Dataset, columns: &[usize], seed: u64) -> Result<TrainedModel, LabError> {
    let x = FeatureMatrix::from_dataset(data, columns);
    Ok(classifiers::train(spec, &x, &data.labels(), seed)?)
}

pub fn predict(model: &TrainedModel, data: &Dataset, columns: &[usize]) -> Result<Vec<f64>, LabError> {
    let x = FeatureMatrix::from_dataset(data, columns);
    Ok(model.predict_proba(&x)?)
}

/// Resamples `train` (all randomness from the plan's seed) and reports sizes.
pub fn resample_train(train: &Dataset, plan: &ResamplePlan, columns: &[usize]) -> Result<(Dataset, ResampleSummary), LabError> {
    let out = resampling::resample(train, plan, columns)?;
    let summary = ResampleSummary {
        plan: plan.clone(),
        original_size: train.len(),
        original_positives: train.positives(),
        resampled_size: out.len(),
        resampled_positives: out.positives(),
        original_rate: train.imbalance(),
        resampled_rate: out.imbalance(),
    };
    Ok((out, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleSummary {
    pub plan: ResamplePlan,
    pub original_size: usize,
    pub original_positives: usize,
    pub resampled_size: usize,
    pub resampled_positives: usize,
    pub original_rate: f64,
    pub resampled_rate: f64,
}

impl ResampleSummary {
    /// Maps predictions of a model fitted on the resampled data back to the
    /// original base rate by inverting the odds shift.
    pub fn correct(&self, predicted: &[f64]) -> Vec<f64> {
        let (b, s) = (self.original_rate, self.resampled_rate);
        predicted
            .iter()
            .map(|&q| {
                let q = classifiers::clamp_probability(q);
                if (s - 0.5).abs() < 1e-12 {
                    bias_correct(q, b).expect("arguments inside (0, 1)")
                } else {
                    let odds = q / (1.0 - q) * b * (1.0 - s) / (s * (1.0 - b));
                    odds / (1.0 + odds)
                }
            })
            .collect()
    }
}

/// Per-year observation counts and surrender rates.
pub fn yearly_review(d: &Dataset) -> BTreeMap<u32, (usize, f64)> {
    let rates = d.yearly_rates();
    d.records_per_year()
        .into_iter()
        .map(|(y, n)| (y, (n, rates[&y])))
        .collect()
}

/// Applies a fitted scaler to a raw dataset, as [`preprocess`] does.
pub fn apply_scaler(raw: &Dataset, scaler: &Scaler, split_year: Option<u32>) -> Result<Dataset, LabError> {
    if raw.is_scaled() {
        return Err(crate::surrender::SurrenderError::AlreadyScaled.into());
    }
    let mut out = raw.clone();
    for r in &mut out.records {
        scaler.transform(&mut r.x);
    }
    out.scaler = Some(scaler.clone());
    out.split_year = split_year;
    Ok(out)
}
