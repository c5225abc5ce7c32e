//! Survival curve under the default Makeham law and the premiums charged for a
//! few endowment contracts.
//!
//! cargo run --example makeham_premiums

use surrender_lab::actuarial::{
    annual_premium, invert_survival, single_premium, survival_prob, ContractTerms, EconomicAssumptions,
    MakehamParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mortality = MakehamParams::default();
    let econ = EconomicAssumptions::default();

    println!("age  10y-survival  median remaining life");
    for age in [25.0, 40.0, 55.0, 70.0] {
        let s10 = survival_prob(age, 10.0, &mortality)?;
        let median = invert_survival(age, 0.5, &mortality)?;
        println!("{age:>3}  {s10:>12.6}  {median:>10.2}");
    }

    println!("\nage  face    term  annual premium  single premium");
    for (age, face, duration) in [(30.0, 20_000.0, 10.0), (35.0, 20_000.0, 15.0), (50.0, 12_000.0, 20.0), (64.0, 8_000.0, 12.0)] {
        let terms = ContractTerms {
            age_at_issue: age,
            face_amount: face,
            duration,
        };
        let annual = annual_premium(&terms, &econ, &mortality)?;
        let single = single_premium(&terms, &econ, &mortality)?;
        // premiums stop at retirement age, so late entrants pay fewer, larger instalments
        println!("{age:>3}  {face:>6}  {duration:>4}  {annual:>14.2}  {single:>14.2}");
    }
    Ok(())
}
