//! Year-by-year simulation of surrender, death and maturity.

use rand::Rng;
use rayon::prelude::*;

use super::dataset::{Dataset, ObservationRecord};
use super::profile::{profile_probability, SurrenderProfile};
use super::SurrenderError;
use crate::actuarial::{self, MakehamParams};
use crate::portfolio::{self, Contract, Portfolio, PricingBasis};
use crate::rng;

/// How a policy left the portfolio, if it did, during one year.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Surrender,
    Death,
    Maturity,
}

#[derive(Debug, Clone)]
pub struct SimulationSettings {
    pub horizon_years: u32,
    pub new_business_rate: f64,
    pub pricing: PricingBasis,
    /// Uniform ordering of a surrender and a competing event in the same year;
    /// when off, the competing event always comes first.
    pub tie_rule: bool,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            horizon_years: 15,
            new_business_rate: 0.06,
            pricing: PricingBasis::default(),
            tie_rule: true,
        }
    }
}

/// Resolves one policy-year.
///
/// `surrender_draw` is compared against `p`; `competing` is the fraction of the
/// year until death or maturity, if either falls in this year; `tie_draw`
/// orders a surrender before the competing event with probability equal to
/// that fraction.
pub fn resolve_year(
    p: f64,
    surrender_draw: f64,
    competing: Option<(Exit, f64)>,
    tie_draw: impl FnOnce() -> f64,
) -> Option<Exit> {
    let surrenders = p >= surrender_draw;
    match (surrenders, competing) {
        (false, None) => None,
        (true, None) => Some(Exit::Surrender),
        (false, Some((exit, _))) => Some(exit),
        (true, Some((exit, tau))) => {
            if tie_draw() < tau {
                Some(Exit::Surrender)
            } else {
                Some(exit)
            }
        }
    }
}

fn death_time(master_seed: u64, c: &Contract, mortality: &MakehamParams) -> f64 {
    if mortality.baseline_hazard + mortality.age_factor <= 0.0 {
        return f64::INFINITY;
    }
    let mut s = rng::stream(master_seed, "death", &[c.policy_id]);
    let u = 1.0 - s.random::<f64>();
    let t = actuarial::invert_survival(c.age, u, mortality)
        .expect("survival inversion converges for valid ages");
    f64::from(c.calendar_year) + t
}

/// Simulates `horizon_years` of activity, starting from `initial`.
///
/// Each in-force policy emits one record per year, labelled 1 iff it surrenders
/// during that year. Records are ordered by policy id, then calendar year.
pub fn simulate_events(
    initial: &Portfolio,
    profile: &SurrenderProfile,
    settings: &SimulationSettings,
    master_seed: u64,
) -> Result<Dataset, SurrenderError> {
    if settings.horizon_years < 1 {
        return Err(SurrenderError::InvalidHorizon);
    }
    let mortality = settings.pricing.mortality;
    let mut book = initial.clone();
    // absolute calendar time of death, aligned with book.contracts
    let mut deaths: Vec<f64> = book
        .contracts
        .par_iter()
        .map(|c| death_time(master_seed, c, &mortality))
        .collect();
    let mut records: Vec<ObservationRecord> = Vec::new();

    for step in 0..settings.horizon_years {
        let year = book.calendar_year;
        let outcomes: Vec<(ObservationRecord, bool)> = book
            .contracts
            .par_iter()
            .zip(deaths.par_iter())
            .map(|(c, &death)| {
                let p = profile_probability(profile, c);
                let mut s = rng::stream(master_seed, "surrender", &[c.policy_id, u64::from(year)]);
                let v = rng::open_unit(&mut s);
                let to_death = death - f64::from(year);
                let competing = [
                    (Exit::Death, to_death),
                    (Exit::Maturity, c.remaining_duration),
                ]
                .into_iter()
                .filter(|(_, t)| *t <= 1.0)
                .fold(None::<(Exit, f64)>, |acc, (e, t)| match acc {
                    Some((_, best)) if best <= t => acc,
                    _ => Some((e, t.max(0.0))),
                });
                let tie_rule = settings.tie_rule;
                let exit = resolve_year(p, v, competing, || {
                    if tie_rule {
                        let mut t = rng::stream(master_seed, "tie", &[c.policy_id, u64::from(year)]);
                        t.random::<f64>()
                    } else {
                        f64::INFINITY
                    }
                });
                let y = u8::from(exit == Some(Exit::Surrender));
                (ObservationRecord::from_contract(c, y, p), exit.is_none())
            })
            .collect();

        let mut survivors = Vec::with_capacity(book.contracts.len());
        let mut survivor_deaths = Vec::with_capacity(book.contracts.len());
        for ((rec, alive), (c, d)) in outcomes.into_iter().zip(book.contracts.into_iter().zip(deaths)) {
            records.push(rec);
            if alive {
                survivors.push(c);
                survivor_deaths.push(d);
            }
        }
        book = Portfolio {
            contracts: survivors,
            calendar_year: year,
            next_policy_id: book.next_policy_id,
        };
        deaths = survivor_deaths;

        if step + 1 < settings.horizon_years {
            let before = book.contracts.len();
            book = portfolio::advance_year(book, master_seed, settings.new_business_rate, &settings.pricing);
            let fresh: Vec<f64> = book.contracts[before..]
                .par_iter()
                .map(|c| death_time(master_seed, c, &mortality))
                .collect();
            deaths.extend(fresh);
        }
    }

    records.sort_by_key(|r| (r.policy_id, r.calendar_year));
    Ok(Dataset::new(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::{generate_initial_portfolio, Feature};
    use crate::surrender::profile::StepFunction;

    fn constant_profile(p: f64) -> SurrenderProfile {
        SurrenderProfile {
            name: "constant".into(),
            intercept: if p <= 0.0 { -1e3 } else { (p / (1.0 - p)).ln() },
            effects: vec![],
            target_rate: None,
        }
    }

    #[test]
    fn tie_resolution() {
        // tau = 0: competing event always first
        for draw in [0.0, 0.3, 0.999] {
            assert_eq!(resolve_year(1.0, 0.5, Some((Exit::Death, 0.0)), || draw), Some(Exit::Death));
        }
        assert_eq!(resolve_year(1.0, 0.5, Some((Exit::Maturity, 0.4)), || 0.39), Some(Exit::Surrender));
        assert_eq!(resolve_year(1.0, 0.5, Some((Exit::Maturity, 0.4)), || 0.41), Some(Exit::Maturity));
        assert_eq!(resolve_year(0.1, 0.5, None, || unreachable!()), None);
        assert_eq!(resolve_year(0.5, 0.5, None, || unreachable!()), Some(Exit::Surrender));
    }

    #[test]
    fn no_surrender_profile_ends_by_death_or_maturity() {
        let settings = SimulationSettings { horizon_years: 40, ..Default::default() };
        let book = generate_initial_portfolio(300, 4, &settings.pricing);
        let d = simulate_events(&book, &constant_profile(0.0), &settings, 4).unwrap();
        assert_eq!(d.positives(), 0);
        // every initial policy leaves within 40 years (max duration is far below)
        let last_year = d.records.iter().filter(|r| r.policy_id < 300).map(|r| r.calendar_year).max().unwrap();
        assert!(last_year < 39);
    }

    #[test]
    fn series_are_consecutive_with_one_terminal_surrender() {
        let settings = SimulationSettings { horizon_years: 12, ..Default::default() };
        let book = generate_initial_portfolio(2_000, 8, &settings.pricing);
        let d = simulate_events(&book, &constant_profile(0.08), &settings, 8).unwrap();
        let mut i = 0;
        while i < d.records.len() {
            let id = d.records[i].policy_id;
            let mut j = i;
            while j < d.records.len() && d.records[j].policy_id == id {
                j += 1;
            }
            let series = &d.records[i..j];
            for w in series.windows(2) {
                assert_eq!(w[1].calendar_year, w[0].calendar_year + 1);
            }
            let ones = series.iter().filter(|r| r.y == 1).count();
            assert!(ones <= 1);
            if ones == 1 {
                assert_eq!(series.last().unwrap().y, 1);
            }
            for r in series {
                assert!(r.x[4] <= r.x[3] + 1e-9 && r.x[5] > 0.0);
            }
            i = j;
        }
    }

    #[test]
    fn label_rate_matches_constant_probability() {
        let settings = SimulationSettings {
            horizon_years: 10,
            new_business_rate: 0.06,
            pricing: PricingBasis {
                mortality: MakehamParams::ZERO_HAZARD,
                ..Default::default()
            },
            tie_rule: true,
        };
        let mut book = generate_initial_portfolio(12_000, 21, &settings.pricing);
        for c in &mut book.contracts {
            // long contracts: no maturities inside the horizon
            c.duration += 30.0;
            c.remaining_duration += 30.0;
        }
        let d = simulate_events(&book, &constant_profile(0.03), &settings, 21).unwrap();
        assert!(d.len() >= 100_000, "{} records", d.len());
        let rate = d.imbalance();
        assert!((rate - 0.03).abs() < 0.002, "rate {rate}");
    }

    #[test]
    fn simulation_is_deterministic_across_thread_counts() {
        let settings = SimulationSettings { horizon_years: 6, ..Default::default() };
        let mut prof = constant_profile(0.04);
        prof.effects.push(StepFunction::new(Feature::Age, vec![35.0], vec![0.5, -0.5]).unwrap());
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let book = generate_initial_portfolio(1_500, 77, &settings.pricing);
                simulate_events(&book, &prof, &settings, 77).unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn zero_horizon_rejected() {
        let settings = SimulationSettings { horizon_years: 0, ..Default::default() };
        let book = generate_initial_portfolio(5, 1, &settings.pricing);
        assert!(simulate_events(&book, &constant_profile(0.1), &settings, 1).is_err());
    }
}
