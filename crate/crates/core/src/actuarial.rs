//! Makeham survival, its inversion for death-time sampling, and
//! equivalence-principle premiums for endowment contracts.
//!
//! Conventions of the discrete premium model:
//! - benefits are paid at the end of the contract year of death, or at maturity;
//!   a death in the final, possibly fractional, contract year is paid at maturity;
//! - premiums are due at the start of each contract year while `t < m`, where
//!   `m = min(duration, retirement_age - age_at_issue)`;
//! - acquisition costs `alpha * F` fall due at issue, administration costs are
//!   `beta` of every premium, amortization costs `gamma * F` fall due at the start
//!   of every contract year in force.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ActuarialError {
    #[error("{name} must be nonnegative and finite, got {value}")]
    NegativeInput { name: &'static str, value: f64 },
    #[error("survival level must lie in (0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("zero hazard: survival cannot be inverted (A + B = 0)")]
    ZeroHazard,
    #[error("no admissible payment period: age at issue {age_at_issue} >= retirement age {retirement_age}")]
    NoPaymentPeriod { age_at_issue: f64, retirement_age: u32 },
    #[error("survival inversion did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid {0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = std::result::Result<T, ActuarialError>;

/// Makeham mortality law `mu(x) = A + B c^x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MakehamParams {
    pub baseline_hazard: f64,
    pub age_factor: f64,
    pub age_base: f64,
}

impl Default for MakehamParams {
    fn default() -> Self {
        Self {
            baseline_hazard: 0.00022,
            age_factor: 2.7e-7,
            age_base: 1.124,
        }
    }
}

impl MakehamParams {
    pub const ZERO_HAZARD: MakehamParams = MakehamParams {
        baseline_hazard: 0.0,
        age_factor: 0.0,
        age_base: 1.124,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.baseline_hazard >= 0.0 && self.baseline_hazard.is_finite()) {
            return Err(ActuarialError::InvalidParameter("baseline hazard A (need A >= 0)"));
        }
        if !(self.age_factor >= 0.0 && self.age_factor.is_finite()) {
            return Err(ActuarialError::InvalidParameter("age factor B (need B >= 0)"));
        }
        if !(self.age_base > 1.0 && self.age_base.is_finite()) {
            return Err(ActuarialError::InvalidParameter("age base c (need c > 1)"));
        }
        Ok(())
    }

    fn has_hazard(&self) -> bool {
        self.baseline_hazard + self.age_factor > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicAssumptions {
    pub interest_rate: f64,
    pub expense_acquisition: f64,
    pub expense_admin: f64,
    pub expense_amort: f64,
    pub retirement_age: u32,
}

impl Default for EconomicAssumptions {
    fn default() -> Self {
        Self {
            interest_rate: 0.02,
            expense_acquisition: 0.025,
            expense_admin: 0.03,
            expense_amort: 0.001,
            retirement_age: 67,
        }
    }
}

impl EconomicAssumptions {
    /// Interest only, no expenses.
    pub fn net(interest_rate: f64) -> Self {
        Self {
            interest_rate,
            expense_acquisition: 0.0,
            expense_admin: 0.0,
            expense_amort: 0.0,
            retirement_age: 67,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.interest_rate > -1.0 && self.interest_rate.is_finite()) {
            return Err(ActuarialError::InvalidParameter("interest rate (need i > -1)"));
        }
        for (name, v) in [
            ("acquisition expense (need [0,1))", self.expense_acquisition),
            ("administration expense (need [0,1))", self.expense_admin),
            ("amortization expense (need [0,1))", self.expense_amort),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(ActuarialError::InvalidParameter(name));
            }
        }
        if self.retirement_age == 0 {
            return Err(ActuarialError::InvalidParameter("retirement age (need > 0)"));
        }
        Ok(())
    }

    fn discount(&self) -> f64 {
        1.0 / (1.0 + self.interest_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractTerms {
    pub age_at_issue: f64,
    pub face_amount: f64,
    pub duration: f64,
}

fn check_nonneg(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ActuarialError::NegativeInput { name, value })
    }
}

/// `t`-year survival probability of a life aged `a`.
pub fn survival_prob(a: f64, t: f64, params: &MakehamParams) -> Result<f64> {
    check_nonneg("age", a)?;
    check_nonneg("horizon", t)?;
    Ok(survival_unchecked(a, t, params))
}

fn survival_unchecked(a: f64, t: f64, p: &MakehamParams) -> f64 {
    let ln_c = p.age_base.ln();
    // c^a (c^t - 1) = exp(a ln c) * expm1(t ln c)
    let age_term = p.age_factor / ln_c * (a * ln_c).exp() * (t * ln_c).exp_m1();
    (-p.baseline_hazard * t - age_term).exp()
}

const INVERSION_MAX_ITER: usize = 200;
const INVERSION_TOL: f64 = 1e-10;

/// Time `t >= 0` at which the survival curve of a life aged `a` falls to `u`.
///
/// Bisection on the monotone map, starting from `[0, 200]` years; the upper
/// end is doubled while it does not bracket `u`.
pub fn invert_survival(a: f64, u: f64, params: &MakehamParams) -> Result<f64> {
    check_nonneg("age", a)?;
    if !(u > 0.0 && u <= 1.0) {
        return Err(ActuarialError::InvalidProbability(u));
    }
    if !params.has_hazard() {
        return Err(ActuarialError::ZeroHazard);
    }
    if u == 1.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 200.0;
    while survival_unchecked(a, hi, params) > u {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(ActuarialError::NotConverged {
                iterations: 0,
                residual: survival_unchecked(a, hi, params) - u,
            });
        }
    }
    for _ in 0..INVERSION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let s = survival_unchecked(a, mid, params);
        if s > u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let residual = survival_unchecked(a, t, params) - u;
    if residual.abs() > INVERSION_TOL {
        return Err(ActuarialError::NotConverged {
            iterations: INVERSION_MAX_ITER,
            residual,
        });
    }
    Ok(t)
}

struct ValuationBasis {
    /// Endowment benefit APV per unit face amount.
    benefit: f64,
    /// Annuity-due over the premium period.
    premium_annuity: f64,
    /// Annuity-due over the contract term.
    term_annuity: f64,
}

fn payment_count(period: f64) -> usize {
    (period.ceil().max(1.0)) as usize
}

fn valuation(
    terms: &ContractTerms,
    premium_period: f64,
    econ: &EconomicAssumptions,
    mort: &MakehamParams,
) -> ValuationBasis {
    let v = econ.discount();
    let x = terms.age_at_issue;
    let d = terms.duration;
    let years = payment_count(d);

    let mut benefit = 0.0;
    let mut term_annuity = 0.0;
    for k in 0..years {
        let start = k as f64;
        let end = ((k + 1) as f64).min(d);
        let s_start = survival_unchecked(x, start, mort);
        let s_end = survival_unchecked(x, end, mort);
        benefit += v.powf(end) * (s_start - s_end);
        term_annuity += v.powi(k as i32) * s_start;
    }
    benefit += v.powf(d) * survival_unchecked(x, d, mort);

    let premium_annuity = (0..payment_count(premium_period))
        .map(|k| v.powi(k as i32) * survival_unchecked(x, k as f64, mort))
        .sum();

    ValuationBasis {
        benefit,
        premium_annuity,
        term_annuity,
    }
}

fn check_terms(terms: &ContractTerms) -> Result<()> {
    check_nonneg("age at issue", terms.age_at_issue)?;
    if !(terms.face_amount > 0.0 && terms.face_amount.is_finite()) {
        return Err(ActuarialError::InvalidParameter("face amount (need > 0)"));
    }
    if !(terms.duration >= 1.0 && terms.duration.is_finite()) {
        return Err(ActuarialError::InvalidParameter("duration (need >= 1)"));
    }
    Ok(())
}

/// Length of the premium payment period: the contract term, cut at retirement.
pub fn premium_period(terms: &ContractTerms, econ: &EconomicAssumptions) -> Result<f64> {
    let to_retirement = f64::from(econ.retirement_age) - terms.age_at_issue;
    if to_retirement <= 0.0 {
        return Err(ActuarialError::NoPaymentPeriod {
            age_at_issue: terms.age_at_issue,
            retirement_age: econ.retirement_age,
        });
    }
    Ok(terms.duration.min(to_retirement))
}

fn gross_premium(
    terms: &ContractTerms,
    period: f64,
    econ: &EconomicAssumptions,
    mort: &MakehamParams,
) -> f64 {
    let b = valuation(terms, period, econ, mort);
    let outgo = terms.face_amount
        * (b.benefit + econ.expense_acquisition + econ.expense_amort * b.term_annuity);
    outgo / ((1.0 - econ.expense_admin) * b.premium_annuity)
}

/// Level annual premium, payable in advance over the premium period.
pub fn annual_premium(
    terms: &ContractTerms,
    econ: &EconomicAssumptions,
    mort: &MakehamParams,
) -> Result<f64> {
    check_terms(terms)?;
    econ.validate()?;
    mort.validate()?;
    let m = premium_period(terms, econ)?;
    Ok(gross_premium(terms, m, econ, mort))
}

/// Single premium paid at issue.
pub fn single_premium(
    terms: &ContractTerms,
    econ: &EconomicAssumptions,
    mort: &MakehamParams,
) -> Result<f64> {
    check_terms(terms)?;
    econ.validate()?;
    mort.validate()?;
    Ok(gross_premium(terms, 1.0, econ, mort))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn survival_trivial_cases() {
        let p = MakehamParams::default();
        assert_eq!(survival_prob(40.0, 0.0, &p).unwrap(), 1.0);
        let zero = MakehamParams::ZERO_HAZARD;
        assert_eq!(survival_prob(63.2, 17.5, &zero).unwrap(), 1.0);
        assert!(survival_prob(-1.0, 1.0, &p).is_err());
        assert!(survival_prob(40.0, -0.1, &p).is_err());
    }

    #[test]
    fn survival_reference_value() {
        // exp(-A - B/ln(c) * c^40 * (c - 1)) evaluated at 50 digits
        let s = survival_prob(40.0, 1.0, &MakehamParams::default()).unwrap();
        assert_relative_eq!(s, 0.999_749_295_484_394_5, max_relative = 1e-13);
    }

    #[test]
    fn survival_decreasing_on_grid() {
        let p = MakehamParams::default();
        for a in (0..=100).step_by(5) {
            let mut prev = 1.0;
            for k in 1..=400 {
                let s = survival_prob(a as f64, k as f64 * 0.25, &p).unwrap();
                assert!(s > 0.0 || k as f64 * 0.25 > 50.0);
                assert!(s < prev || (s == 0.0 && prev == 0.0), "a={a} k={k}");
                prev = s;
            }
        }
    }

    #[test]
    fn inversion_edge_cases() {
        let p = MakehamParams::default();
        assert_eq!(invert_survival(40.0, 1.0, &p).unwrap(), 0.0);
        assert!(matches!(
            invert_survival(40.0, 0.0, &p),
            Err(ActuarialError::InvalidProbability(_))
        ));
        assert!(invert_survival(40.0, 1.2, &p).is_err());
        assert_eq!(
            invert_survival(40.0, 0.5, &MakehamParams::ZERO_HAZARD),
            Err(ActuarialError::ZeroHazard)
        );
    }

    #[test]
    fn inversion_hits_median() {
        let p = MakehamParams::default();
        let t = invert_survival(40.0, 0.5, &p).unwrap();
        let s = survival_prob(40.0, t, &p).unwrap();
        assert!((s - 0.5).abs() <= 1e-10);
    }

    #[test]
    fn inversion_round_trip_grid() {
        let p = MakehamParams::default();
        for a in [0.0, 20.0, 37.4, 55.0, 80.0] {
            for t in [1.0, 5.0, 20.0] {
                let s = survival_prob(a, t, &p).unwrap();
                let back = invert_survival(a, s, &p).unwrap();
                assert!((back - t).abs() < 1e-8, "a={a} t={t} back={back}");
            }
        }
    }

    #[test]
    fn inversion_extends_bracket_for_flat_hazard() {
        let p = MakehamParams {
            baseline_hazard: 0.001,
            age_factor: 0.0,
            age_base: 1.124,
        };
        let t = invert_survival(30.0, 0.5, &p).unwrap();
        assert_relative_eq!(t, std::f64::consts::LN_2 / 0.001, max_relative = 1e-10);
    }

    #[test]
    fn premium_spreads_benefit_without_interest() {
        let terms = ContractTerms {
            age_at_issue: 30.0,
            face_amount: 1000.0,
            duration: 10.0,
        };
        let p = annual_premium(&terms, &EconomicAssumptions::net(0.0), &MakehamParams::ZERO_HAZARD)
            .unwrap();
        assert_relative_eq!(p, 100.0, max_relative = 1e-12);
    }

    #[test]
    fn single_premium_one_year_discounting() {
        let terms = ContractTerms {
            age_at_issue: 30.0,
            face_amount: 1020.0,
            duration: 1.0,
        };
        let econ = EconomicAssumptions::net(0.02);
        let sp = single_premium(&terms, &econ, &MakehamParams::ZERO_HAZARD).unwrap();
        assert_relative_eq!(sp, 1000.0, max_relative = 1e-12);
        let ap = annual_premium(&terms, &econ, &MakehamParams::ZERO_HAZARD).unwrap();
        assert_relative_eq!(ap, 1000.0, max_relative = 1e-12);
    }

    #[test]
    fn premium_rejects_issue_after_retirement() {
        let terms = ContractTerms {
            age_at_issue: 67.0,
            face_amount: 1000.0,
            duration: 10.0,
        };
        assert!(matches!(
            annual_premium(&terms, &EconomicAssumptions::default(), &MakehamParams::default()),
            Err(ActuarialError::NoPaymentPeriod { .. })
        ));
    }

    #[test]
    fn premium_monotonicity_grid() {
        let econ = EconomicAssumptions::default();
        let mort = MakehamParams::default();
        for age in [20.0, 35.0, 50.0] {
            let mut prev = 0.0;
            for face in [5_000.0, 10_000.0, 20_000.0, 40_000.0] {
                let p = annual_premium(
                    &ContractTerms { age_at_issue: age, face_amount: face, duration: 12.0 },
                    &econ,
                    &mort,
                )
                .unwrap();
                assert!(p > prev);
                prev = p;
            }
        }
        // longer payment periods (via later retirement) lower the premium
        let terms = ContractTerms { age_at_issue: 50.0, face_amount: 20_000.0, duration: 15.0 };
        let mut prev = f64::INFINITY;
        for retirement_age in 52..=65 {
            let econ = EconomicAssumptions { retirement_age, ..econ };
            let p = annual_premium(&terms, &econ, &mort).unwrap();
            assert!(p < prev, "retirement {retirement_age}");
            prev = p;
        }
    }
}
