//! Latent logistic surrender profiles with piecewise-constant feature effects.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SurrenderError;
use crate::portfolio::{Contract, Feature};

/// Piecewise-constant effect of one feature on the surrender log-odds.
///
/// Interval `k` is `[breakpoints[k-1], breakpoints[k])`, with open ends at
/// both sides; `values[k]` is the effect on that interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub feature: Feature,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn new(
        feature: Feature,
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, SurrenderError> {
        if values.len() != breakpoints.len() + 1 {
            return Err(SurrenderError::InvalidProfile(format!(
                "effect on '{}': {} values for {} breakpoints (need breakpoints + 1)",
                feature.key(),
                values.len(),
                breakpoints.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| !b.is_finite())
        {
            return Err(SurrenderError::InvalidProfile(format!(
                "effect on '{}': breakpoints must be finite and strictly ascending",
                feature.key()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SurrenderError::InvalidProfile(format!(
                "effect on '{}': values must be finite",
                feature.key()
            )));
        }
        Ok(Self {
            feature,
            breakpoints,
            values,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        self.values[k]
    }
}

/// Log-odds effect of a feature level, relative to a baseline level with effect 0.
pub fn effect_from_odds_ratio(odds_ratio: f64) -> Result<f64, SurrenderError> {
    if odds_ratio > 0.0 && odds_ratio.is_finite() {
        Ok(odds_ratio.ln())
    } else {
        Err(SurrenderError::InvalidOddsRatio(odds_ratio))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smallest distance a latent probability keeps from 0 and 1.
const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrenderProfile {
    pub name: String,
    pub intercept: f64,
    pub effects: Vec<StepFunction>,
    /// Mean surrender rate the intercept is calibrated to, if any.
    pub target_rate: Option<f64>,
}

impl SurrenderProfile {
    /// Distinct features the profile depends on, in canonical order.
    pub fn features(&self) -> Vec<Feature> {
        let mut f: Vec<Feature> = self.effects.iter().map(|e| e.feature).collect();
        f.sort();
        f.dedup();
        f
    }

    /// Sum of all feature effects, excluding the intercept.
    pub fn effect_sum(&self, contract: &Contract) -> f64 {
        self.effects
            .iter()
            .map(|e| e.eval(contract.feature(e.feature)))
            .sum()
    }

    pub fn load(path: &Path) -> Result<Self, SurrenderError> {
        let text = std::fs::read_to_string(path).map_err(|e| SurrenderError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, SurrenderError> {
        let raw: ProfileFile =
            toml::from_str(text).map_err(|e| SurrenderError::InvalidProfile(e.to_string()))?;
        raw.into_profile()
    }

    pub fn to_toml(&self) -> String {
        let file = ProfileFile {
            name: self.name.clone(),
            intercept: self.intercept,
            target_rate: self.target_rate,
            effects: self
                .effects
                .iter()
                .map(|e| EffectEntry {
                    feature: e.feature.key().to_string(),
                    breakpoints: e.breakpoints.clone(),
                    values: Some(e.values.clone()),
                    odds_ratios: None,
                })
                .collect(),
        };
        toml::to_string(&file).expect("profile serializes")
    }
}

/// True one-year surrender probability of a contract under a profile.
///
/// Contracts expose every [`Feature`], and profile construction rejects unknown
/// feature keys, so every effect key resolves.
pub fn profile_probability(profile: &SurrenderProfile, contract: &Contract) -> f64 {
    probability_from_logit(profile.intercept + profile.effect_sum(contract))
}

pub(crate) fn probability_from_logit(z: f64) -> f64 {
    sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Intercept for which the mean profile probability over `reference` equals
/// `target_rate`.
pub fn calibrate_intercept(
    profile: &SurrenderProfile,
    reference: &[Contract],
    target_rate: f64,
) -> Result<f64, SurrenderError> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(SurrenderError::InvalidTargetRate(target_rate));
    }
    if reference.is_empty() {
        return Err(SurrenderError::EmptyReference);
    }
    let sums: Vec<f64> = reference.iter().map(|c| profile.effect_sum(c)).collect();
    let mean_at = |b0: f64| sums.iter().map(|s| sigmoid(b0 + s)).sum::<f64>() / sums.len() as f64;

    let (mut lo, mut hi) = (-40.0, 40.0);
    let (m_lo, m_hi) = (mean_at(lo), mean_at(hi));
    if !(m_lo <= target_rate && target_rate <= m_hi) {
        return Err(SurrenderError::CalibrationBracket {
            lo,
            hi,
            mean_lo: m_lo,
            mean_hi: m_hi,
            target: target_rate,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileFile {
    name: String,
    intercept: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_rate: Option<f64>,
    #[serde(default)]
    effects: Vec<EffectEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EffectEntry {
    feature: String,
    #[serde(default)]
    breakpoints: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    odds_ratios: Option<Vec<f64>>,
}

impl ProfileFile {
    fn into_profile(self) -> Result<SurrenderProfile, SurrenderError> {
        if !self.intercept.is_finite() {
            return Err(SurrenderError::InvalidProfile("intercept must be finite".into()));
        }
        if let Some(t) = self.target_rate {
            if !(t > 0.0 && t < 1.0) {
                return Err(SurrenderError::InvalidTargetRate(t));
            }
        }
        let mut effects = Vec::with_capacity(self.effects.len());
        for (i, e) in self.effects.into_iter().enumerate() {
            let feature: Feature = e
                .feature
                .parse()
                .map_err(|msg| SurrenderError::InvalidProfile(format!("effects[{i}]: {msg}")))?;
            let values = match (e.values, e.odds_ratios) {
                (Some(v), None) => v,
                (None, Some(ors)) => ors
                    .into_iter()
                    .map(effect_from_odds_ratio)
                    .collect::<Result<Vec<_>, _>>()?,
                _ => {
                    return Err(SurrenderError::InvalidProfile(format!(
                        "effects[{i}]: give exactly one of 'values' or 'odds_ratios'"
                    )))
                }
            };
            effects.push(StepFunction::new(feature, e.breakpoints, values)?);
        }
        Ok(SurrenderProfile {
            name: self.name,
            intercept: self.intercept,
            effects,
            target_rate: self.target_rate,
        })
    }
}
