//! Synthetic endowment portfolios: the initial book and its yearly evolution
//! with new business.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actuarial::{
    self, ActuarialError, ContractTerms, EconomicAssumptions, MakehamParams,
};
use crate::rng::{self, Stream};

pub const AGE_SHAPE: f64 = 5.5;
pub const AGE_SCALE: f64 = 6.8;
pub const FACE_OFFSET: f64 = 5_000.0;
pub const FACE_SHAPE: f64 = 4.0;
pub const FACE_SCALE: f64 = 2_000.0;
pub const DURATION_OFFSET: f64 = 5.0;
pub const DURATION_SHAPE: f64 = 5.0;
pub const DURATION_SCALE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PremiumFrequency {
    Upfront,
    Annual,
    Monthly,
}

impl PremiumFrequency {
    pub const ALL: [PremiumFrequency; 3] = [Self::Upfront, Self::Annual, Self::Monthly];
    pub const SHARES: [f64; 3] = [0.15, 0.25, 0.60];

    /// Fixed category order (upfront, annual, monthly).
    pub fn index(self) -> usize {
        match self {
            Self::Upfront => 0,
            Self::Annual => 1,
            Self::Monthly => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (f, share) in Self::ALL.iter().zip(Self::SHARES) {
            acc += share;
            if u < acc {
                return *f;
            }
        }
        Self::Monthly
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Upfront => "upfront",
            Self::Annual => "annual",
            Self::Monthly => "monthly",
        }
    }
}

impl fmt::Display for PremiumFrequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PremiumFrequency {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "upfront" => Ok(Self::Upfront),
            "annual" => Ok(Self::Annual),
            "monthly" => Ok(Self::Monthly),
            other => Err(format!("unknown premium frequency '{other}'")),
        }
    }
}

/// Contract features a surrender profile may depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    CalendarYear,
    Age,
    FaceAmount,
    Duration,
    ElapsedDuration,
    RemainingDuration,
    PremiumFrequency,
    AnnualPremium,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Self::CalendarYear,
        Self::Age,
        Self::FaceAmount,
        Self::Duration,
        Self::ElapsedDuration,
        Self::RemainingDuration,
        Self::PremiumFrequency,
        Self::AnnualPremium,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Self::CalendarYear => "calendar_year",
            Self::Age => "age",
            Self::FaceAmount => "face_amount",
            Self::Duration => "duration",
            Self::ElapsedDuration => "elapsed_duration",
            Self::RemainingDuration => "remaining_duration",
            Self::PremiumFrequency => "premium_frequency",
            Self::AnnualPremium => "annual_premium",
        }
    }
}

impl FromStr for Feature {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.key() == s)
            .ok_or_else(|| format!("unknown contract feature '{s}'"))
    }
}

/// One endowment policy at a given calendar year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub calendar_year: u32,
    pub age: f64,
    pub face_amount: f64,
    pub duration: f64,
    pub elapsed_duration: f64,
    pub remaining_duration: f64,
    pub premium_frequency: PremiumFrequency,
    pub annual_premium: f64,
    pub policy_id: u64,
}

impl Contract {
    /// Raw value of a feature; the premium frequency maps to its category index.
    pub fn feature(&self, f: Feature) -> f64 {
        match f {
            Feature::CalendarYear => f64::from(self.calendar_year),
            Feature::Age => self.age,
            Feature::FaceAmount => self.face_amount,
            Feature::Duration => self.duration,
            Feature::ElapsedDuration => self.elapsed_duration,
            Feature::RemainingDuration => self.remaining_duration,
            Feature::PremiumFrequency => self.premium_frequency.index() as f64,
            Feature::AnnualPremium => self.annual_premium,
        }
    }

    pub fn age_at_issue(&self) -> f64 {
        self.age - self.elapsed_duration
    }

    /// Checks the structural invariants of a contract.
    pub fn check_invariants(&self) -> Result<(), String> {
        let tol = 1e-9 * self.duration.max(1.0);
        if !(self.age >= 0.0 && self.face_amount > 0.0 && self.duration >= 1.0) {
            return Err(format!("policy {}: invalid age/face/duration", self.policy_id));
        }
        if self.elapsed_duration < 0.0
            || self.elapsed_duration > self.duration.min(self.age) + tol
        {
            return Err(format!(
                "policy {}: elapsed {} exceeds min(duration {}, age {})",
                self.policy_id, self.elapsed_duration, self.duration, self.age
            ));
        }
        if (self.remaining_duration - (self.duration - self.elapsed_duration)).abs() > tol {
            return Err(format!("policy {}: remaining duration mismatch", self.policy_id));
        }
        if self.age_at_issue() < -tol {
            return Err(format!("policy {}: negative age at issue", self.policy_id));
        }
        if !(self.annual_premium >= 0.0 && self.annual_premium.is_finite()) {
            return Err(format!("policy {}: invalid premium", self.policy_id));
        }
        Ok(())
    }
}

/// Interest, expense and mortality basis used to price new contracts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PricingBasis {
    pub economics: EconomicAssumptions,
    pub mortality: MakehamParams,
}

/// Annual premium amount of a contract as recorded in the portfolio.
///
/// Annual and monthly payers carry the level annual premium; up-front payers
/// carry the single premium spread linearly over the premium period. Contracts
/// issued at or after retirement age have no premium period and pay a single
/// premium at issue, which is then their annual amount.
pub fn contract_premium(
    terms: &ContractTerms,
    frequency: PremiumFrequency,
    basis: &PricingBasis,
) -> Result<f64, ActuarialError> {
    let period = match actuarial::premium_period(terms, &basis.economics) {
        Ok(m) => m,
        Err(ActuarialError::NoPaymentPeriod { .. }) => {
            return actuarial::single_premium(terms, &basis.economics, &basis.mortality);
        }
        Err(e) => return Err(e),
    };
    match frequency {
        PremiumFrequency::Upfront => {
            let single = actuarial::single_premium(terms, &basis.economics, &basis.mortality)?;
            Ok(single / period.max(1.0))
        }
        PremiumFrequency::Annual | PremiumFrequency::Monthly => {
            actuarial::annual_premium(terms, &basis.economics, &basis.mortality)
        }
    }
}

/// Draws one contract from the portfolio distributions.
pub fn sample_contract(
    rng: &mut Stream,
    calendar_year: u32,
    is_new_business: bool,
    policy_id: u64,
    basis: &PricingBasis,
) -> Contract {
    let age = rng::gamma(rng, AGE_SHAPE, AGE_SCALE);
    let face_amount = FACE_OFFSET + rng::gamma(rng, FACE_SHAPE, FACE_SCALE);
    let duration = DURATION_OFFSET + rng::gamma(rng, DURATION_SHAPE, DURATION_SCALE);
    let u: f64 = rng.random();
    let elapsed_duration = if is_new_business {
        0.0
    } else {
        (duration * u).min(age)
    };
    let premium_frequency = PremiumFrequency::sample(rng);
    let terms = ContractTerms {
        age_at_issue: age - elapsed_duration,
        face_amount,
        duration,
    };
    let annual_premium = contract_premium(&terms, premium_frequency, basis)
        .expect("sampled contract terms are always admissible");
    Contract {
        calendar_year,
        age,
        face_amount,
        duration,
        elapsed_duration,
        remaining_duration: duration - elapsed_duration,
        premium_frequency,
        annual_premium,
        policy_id,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub contracts: Vec<Contract>,
    pub calendar_year: u32,
    /// Identifier handed to the next contract written.
    pub next_policy_id: u64,
}

fn sample_batch(
    master_seed: u64,
    ids: std::ops::Range<u64>,
    calendar_year: u32,
    is_new_business: bool,
    basis: &PricingBasis,
) -> Vec<Contract> {
    ids.into_par_iter()
        .map(|id| {
            let mut s = rng::stream(master_seed, "contract", &[id]);
            sample_contract(&mut s, calendar_year, is_new_business, id, basis)
        })
        .collect()
}

/// Initial book of `n0` in-force contracts at calendar year 0.
pub fn generate_initial_portfolio(n0: usize, master_seed: u64, basis: &PricingBasis) -> Portfolio {
    assert!(n0 >= 1, "initial portfolio needs at least one contract");
    let n = n0 as u64;
    Portfolio {
        contracts: sample_batch(master_seed, 0..n, 0, false, basis),
        calendar_year: 0,
        next_policy_id: n,
    }
}

/// Number of new contracts written for `active` in-force contracts (half-up rounding).
pub fn new_business_count(active: usize, rate: f64) -> usize {
    (rate * active as f64 + 0.5).floor() as usize
}

/// Ages every contract by one year and appends new business.
///
/// `portfolio` must hold only contracts that are still in force at the end of
/// the current year.
pub fn advance_year(
    portfolio: Portfolio,
    master_seed: u64,
    new_business_rate: f64,
    basis: &PricingBasis,
) -> Portfolio {
    assert!(new_business_rate >= 0.0, "new business rate must be nonnegative");
    let year = portfolio.calendar_year + 1;
    let mut contracts: Vec<Contract> = portfolio
        .contracts
        .into_iter()
        .map(|mut c| {
            c.calendar_year = year;
            c.age += 1.0;
            c.elapsed_duration += 1.0;
            c.remaining_duration = c.duration - c.elapsed_duration;
            c
        })
        .collect();
    let added = new_business_count(contracts.len(), new_business_rate) as u64;
    let first = portfolio.next_policy_id;
    contracts.extend(sample_batch(master_seed, first..first + added, year, true, basis));
    Portfolio {
        contracts,
        calendar_year: year,
        next_policy_id: first + added,
    }
}

/// Writes a snapshot with one row per contract.
pub fn write_portfolio_csv<W: Write>(portfolio: &Portfolio, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in &portfolio.contracts {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}
